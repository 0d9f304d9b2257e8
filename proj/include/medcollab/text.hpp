#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace medcollab::text {

/// Unicode full case folding of UTF-8 text.
std::string fold(std::string_view s);

/// Strip leading/trailing whitespace.
std::string trim(std::string_view s);

/// Collapse runs of whitespace into single spaces and trim.
std::string squash_ws(std::string_view s);

/// Label key used for every label comparison: fold + trim + squash.
std::string label_key(std::string_view s);

/// Evaluation tokenizer: fold, delete Unicode punctuation, split on whitespace.
std::vector<std::string> tokenize(std::string_view s);

std::string sha256_hex(std::string_view data);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

}  // namespace medcollab::text
