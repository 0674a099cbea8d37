#include "charparse/mst.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace charparse {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

using Matrix = std::vector<std::vector<double>>;

// Nodes of the cycle through `start` in head order, or empty.
std::vector<int> find_cycle(const std::vector<int>& head) {
  const int n = static_cast<int>(head.size());
  std::vector<int> state(n, 0);
  for (int s = 1; s < n; ++s) {
    if (state[s]) continue;
    std::vector<int> path;
    int v = s;
    while (v > 0 && state[v] == 0) {
      state[v] = 1;
      path.push_back(v);
      v = head[v];
    }
    if (v > 0 && state[v] == 1) {
      std::vector<int> cycle{v};
      for (int u = head[v]; u != v; u = head[u]) cycle.push_back(u);
      return cycle;
    }
    for (int p : path) state[p] = 2;
  }
  return {};
}

}  // namespace

std::vector<int> chu_liu_edmonds(const Matrix& S) {
  const int N = static_cast<int>(S.size());
  std::vector<int> head(N, -1);
  for (int d = 1; d < N; ++d) {
    int best = -1;
    for (int h = 0; h < N; ++h) {
      if (h == d) continue;
      if (best < 0 || S[h][d] > S[best][d]) best = h;
    }
    head[d] = best;
  }
  const std::vector<int> cycle = find_cycle(head);
  if (cycle.empty()) return head;

  std::vector<bool> in_cycle(N, false);
  for (int v : cycle) in_cycle[v] = true;
  std::vector<int> idx(N, -1), orig;
  for (int v = 0; v < N; ++v) {
    if (!in_cycle[v]) {
      idx[v] = static_cast<int>(orig.size());
      orig.push_back(v);
    }
  }
  const int M = static_cast<int>(orig.size()) + 1;
  const int c = M - 1;
  Matrix S2(M, std::vector<double>(M, kNegInf));
  std::vector<int> enter(N, -1), leave(N, -1);
  for (int u = 0; u < N; ++u) {
    if (in_cycle[u]) continue;
    for (int v = 1; v < N; ++v) {
      if (in_cycle[v] || u == v) continue;
      S2[idx[u]][idx[v]] = S[u][v];
    }
    double best = kNegInf;
    for (int v : cycle) {
      const double gain = S[u][v] - S[head[v]][v];
      if (enter[u] < 0 || gain > best) {
        best = gain;
        enter[u] = v;
      }
    }
    S2[idx[u]][c] = best;
  }
  for (int v = 1; v < N; ++v) {
    if (in_cycle[v]) continue;
    double best = kNegInf;
    for (int u = 0; u < N; ++u) {
      if (!in_cycle[u]) continue;
      if (leave[v] < 0 || S[u][v] > best) {
        best = S[u][v];
        leave[v] = u;
      }
    }
    S2[c][idx[v]] = best;
  }

  const std::vector<int> head2 = chu_liu_edmonds(S2);
  std::vector<int> out = head;
  for (int v = 1; v < N; ++v) {
    if (in_cycle[v]) continue;
    const int h2 = head2[idx[v]];
    out[v] = h2 == c ? leave[v] : orig[h2];
  }
  const int u = orig[head2[c]];
  out[enter[u]] = u;
  return out;
}

std::vector<int> decode_heads(const Tensor<double>& arc) {
  if (arc.rank() != 2 || arc.dim(1) == 0 || arc.dim(0) != arc.dim(1) + 1) {
    throw std::invalid_argument("decode_heads: expected [(n+1) x n] scores, got " + shape_string(arc.shape()));
  }
  const int n = static_cast<int>(arc.dim(1));
  for (double v : arc.values()) {
    if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) {
      throw std::invalid_argument("decode_heads: scores must be finite or -inf");
    }
  }
  if (n == 1) return {0};
  Matrix S(n + 1, std::vector<double>(n + 1, kNegInf));
  for (int h = 0; h <= n; ++h) {
    for (int d = 1; d <= n; ++d) {
      if (h != d) S[h][d] = arc(h, d - 1);
    }
  }
  auto to_heads = [n](const std::vector<int>& full) { return std::vector<int>(full.begin() + 1, full.begin() + 1 + n); };
  auto root_children = [](const std::vector<int>& heads) {
    int c = 0;
    for (int h : heads) c += h == 0;
    return c;
  };
  std::vector<int> heads = to_heads(chu_liu_edmonds(S));
  if (root_children(heads) == 1) return heads;

  std::vector<int> best;
  double best_score = kNegInf;
  for (int r = 1; r <= n; ++r) {
    if (S[0][r] == kNegInf) continue;
    Matrix Sr = S;
    for (int d = 1; d <= n; ++d) {
      if (d != r) Sr[0][d] = kNegInf;
    }
    std::vector<int> cand = to_heads(chu_liu_edmonds(Sr));
    if (root_children(cand) != 1) continue;
    const double total = tree_score(arc, cand);
    if (best.empty() || total > best_score) {
      best = std::move(cand);
      best_score = total;
    }
  }
  if (best.empty()) throw std::invalid_argument("decode_heads: no single-rooted tree has finite score");
  return best;
}

double tree_score(const Tensor<double>& arc, std::span<const int> heads) {
  double total = 0.0;
  for (std::size_t i = 0; i < heads.size(); ++i) total += arc(static_cast<std::size_t>(heads[i]), i);
  return total;
}

std::vector<int> argmax_rows(const Tensor<double>& scores) {
  if (scores.rank() != 2 || scores.dim(1) == 0) throw std::invalid_argument("argmax_rows: expected [n x L] scores");
  std::vector<int> out(scores.dim(0), 0);
  for (std::size_t i = 0; i < scores.dim(0); ++i) {
    for (std::size_t k = 1; k < scores.dim(1); ++k) {
      if (scores(i, k) > scores(i, static_cast<std::size_t>(out[i]))) out[i] = static_cast<int>(k);
    }
  }
  return out;
}

ParseTree decode_tree(const Tensor<double>& arc, const Tensor<double>& labels,
                      std::span<const std::string> label_names) {
  ParseTree tree;
  tree.heads = decode_heads(arc);
  const std::size_t n = tree.heads.size();
  if (labels.rank() != 3 || labels.dim(0) != n + 1 || labels.dim(1) != n || labels.dim(2) != label_names.size() ||
      label_names.empty()) {
    throw std::invalid_argument("decode_tree: label scores " + shape_string(labels.shape()) + " do not match " +
                                std::to_string(n) + " tokens and " + std::to_string(label_names.size()) + " labels");
  }
  const std::size_t L = label_names.size();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t h = static_cast<std::size_t>(tree.heads[i]);
    std::size_t best = 0;
    for (std::size_t k = 1; k < L; ++k) {
      if (labels(h, i, k) > labels(h, i, best)) best = k;
    }
    tree.labels.push_back(label_names[best]);
  }
  return tree;
}

}  // namespace charparse
