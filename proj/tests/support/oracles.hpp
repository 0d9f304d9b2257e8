// Independent reference implementations used to freeze expected values in tests.
// Deliberately naive: none of these share code with the library beyond tokenization.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

using Edges = std::set<std::pair<std::string, std::string>>;

/// True iff some node can reach itself: one DFS per start node.
inline bool has_cycle(const Edges& edges) {
  std::map<std::string, std::vector<std::string>> adj;
  std::set<std::string> nodes;
  for (const auto& [a, b] : edges) {
    adj[a].push_back(b);
    nodes.insert(a);
    nodes.insert(b);
  }
  for (const auto& start : nodes) {
    std::set<std::string> seen;
    std::vector<std::string> stack(adj[start].begin(), adj[start].end());
    while (!stack.empty()) {
      auto n = stack.back();
      stack.pop_back();
      if (n == start) return true;
      if (!seen.insert(n).second) continue;
      for (const auto& m : adj[n]) stack.push_back(m);
    }
  }
  return false;
}

/// Every elementary cycle, found by trying each ordered node subset as a rotation-canonical cycle.
/// Exponential; only for graphs of a handful of nodes.
inline std::vector<std::vector<std::string>> all_cycles(const Edges& edges) {
  std::set<std::string> node_set;
  for (const auto& [a, b] : edges) {
    node_set.insert(a);
    node_set.insert(b);
  }
  std::vector<std::string> nodes(node_set.begin(), node_set.end());
  std::vector<std::vector<std::string>> out;
  const size_t n = nodes.size();
  for (unsigned mask = 1; mask < (1u << n); ++mask) {
    std::vector<std::string> subset;
    for (size_t i = 0; i < n; ++i)
      if (mask & (1u << i)) subset.push_back(nodes[i]);
    // subset is sorted, so subset[0] is the smallest label; permute the rest
    std::vector<std::string> rest(subset.begin() + 1, subset.end());
    do {
      std::vector<std::string> cyc{subset[0]};
      cyc.insert(cyc.end(), rest.begin(), rest.end());
      bool ok = true;
      for (size_t i = 0; i < cyc.size() && ok; ++i) ok = edges.contains({cyc[i], cyc[(i + 1) % cyc.size()]});
      if (ok) out.push_back(cyc);
    } while (std::next_permutation(rest.begin(), rest.end()));
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Maximal directed paths of a DAG (first node has no predecessor, last has no successor), sorted longest
/// first then lexicographically.
inline std::vector<std::vector<std::string>> maximal_paths(const std::vector<std::string>& nodes, const Edges& edges) {
  std::map<std::string, int> indeg;
  for (const auto& [a, b] : edges) ++indeg[b];
  std::vector<std::vector<std::string>> out;
  std::function<void(std::vector<std::string>&)> walk = [&](std::vector<std::string>& path) {
    bool extended = false;
    for (const auto& [a, b] : edges)
      if (a == path.back()) {
        extended = true;
        path.push_back(b);
        walk(path);
        path.pop_back();
      }
    if (!extended) out.push_back(path);
  };
  for (const auto& n : nodes)
    if (indeg[n] == 0) {
      std::vector<std::string> p{n};
      walk(p);
    }
  std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) {
    if (x.size() != y.size()) return x.size() > y.size();
    return x < y;
  });
  return out;
}

/// Filtered weight sum: agents whose logic is strictly above tau contribute their weight.
inline double filtered_sum(const std::vector<std::string>& supporters, const std::map<std::string, double>& w,
                           const std::map<std::string, double>& logic, double tau) {
  double s = 0;
  for (const auto& a : supporters)
    if (logic.at(a) > tau) s += w.at(a);
  return s;
}

/// BLEU-4 with uniform weights; an order with no matches uses 1/(c+1) in place of 0/c.
inline double bleu(const std::vector<std::string>& cand, const std::vector<std::string>& ref) {
  if (cand.empty() && ref.empty()) return 1.0;
  if (cand.empty() || ref.empty()) return 0.0;
  double log_sum = 0;
  for (size_t n = 1; n <= 4; ++n) {
    std::map<std::vector<std::string>, int> rc;
    for (size_t i = 0; i + n <= ref.size(); ++i) ++rc[std::vector<std::string>(ref.begin() + i, ref.begin() + i + n)];
    std::map<std::vector<std::string>, int> cc;
    for (size_t i = 0; i + n <= cand.size(); ++i) ++cc[std::vector<std::string>(cand.begin() + i, cand.begin() + i + n)];
    double matched = 0, total = cand.size() >= n ? static_cast<double>(cand.size() - n + 1) : 0.0;
    for (const auto& [g, c] : cc) matched += std::min(c, rc.count(g) ? rc[g] : 0);
    double p = matched > 0 ? matched / total : 1.0 / (total + 1.0);
    log_sum += std::log(p) / 4.0;
  }
  double c = static_cast<double>(cand.size()), r = static_cast<double>(ref.size());
  double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(log_sum);
}

/// LCS by memoized recursion, then F1.
inline double rouge_l(const std::vector<std::string>& cand, const std::vector<std::string>& ref) {
  if (cand.empty() && ref.empty()) return 1.0;
  if (cand.empty() || ref.empty()) return 0.0;
  std::map<std::pair<size_t, size_t>, size_t> memo;
  std::function<size_t(size_t, size_t)> lcs = [&](size_t i, size_t j) -> size_t {
    if (i == cand.size() || j == ref.size()) return 0;
    auto key = std::make_pair(i, j);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    size_t v = cand[i] == ref[j] ? 1 + lcs(i + 1, j + 1) : std::max(lcs(i + 1, j), lcs(i, j + 1));
    return memo[key] = v;
  };
  double l = static_cast<double>(lcs(0, 0));
  if (l == 0) return 0.0;
  double p = l / cand.size(), r = l / ref.size();
  return 2 * p * r / (p + r);
}

}  // namespace oracle
