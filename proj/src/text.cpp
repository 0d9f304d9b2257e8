#include "medcollab/text.hpp"

#include <openssl/evp.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include <array>
#include <stdexcept>

namespace medcollab::text {

namespace {

// Walks UTF-8 code points; invalid sequences come back as U+FFFD.
template <typename Fn>
void for_each_cp(std::string_view s, Fn&& fn) {
  int32_t i = 0;
  const auto len = static_cast<int32_t>(s.size());
  while (i < len) {
    UChar32 c;
    U8_NEXT(s.data(), i, len, c);
    if (c < 0) c = 0xFFFD;
    fn(c);
  }
}

void append_cp(std::string& out, UChar32 c) {
  char buf[U8_MAX_LENGTH];
  int32_t n = 0;
  UBool err = false;
  U8_APPEND(buf, n, U8_MAX_LENGTH, c, err);
  if (!err) out.append(buf, static_cast<size_t>(n));
}

bool is_space(UChar32 c) { return u_isUWhiteSpace(c); }

}  // namespace

std::string fold(std::string_view s) {
  auto u = icu::UnicodeString::fromUTF8(icu::StringPiece(s.data(), static_cast<int32_t>(s.size())));
  u.foldCase(U_FOLD_CASE_DEFAULT);
  std::string out;
  u.toUTF8String(out);
  return out;
}

std::string trim(std::string_view s) {
  std::vector<UChar32> cps;
  for_each_cp(s, [&](UChar32 c) { cps.push_back(c); });
  size_t b = 0, e = cps.size();
  while (b < e && is_space(cps[b])) ++b;
  while (e > b && is_space(cps[e - 1])) --e;
  std::string out;
  for (size_t i = b; i < e; ++i) append_cp(out, cps[i]);
  return out;
}

std::string squash_ws(std::string_view s) {
  std::string out;
  bool pending = false;
  for_each_cp(s, [&](UChar32 c) {
    if (is_space(c)) {
      pending = !out.empty();
      return;
    }
    if (pending) out.push_back(' ');
    pending = false;
    append_cp(out, c);
  });
  return out;
}

std::string label_key(std::string_view s) { return squash_ws(fold(s)); }

std::vector<std::string> tokenize(std::string_view s) {
  std::vector<std::string> tokens;
  std::string cur;
  for_each_cp(fold(s), [&](UChar32 c) {
    if (is_space(c)) {
      if (!cur.empty()) tokens.push_back(std::move(cur));
      cur.clear();
    } else if (!u_ispunct(c)) {
      append_cp(cur, c);
    }
  });
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 0xF]);
  }
  return out;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i) out.append(sep);
    out.append(parts[i]);
  }
  return out;
}

}  // namespace medcollab::text
