#pragma once

#include <span>
#include <string>
#include <vector>

#include "charparse/parse_tree.hpp"
#include "charparse/tensor.hpp"

namespace charparse {

/// Maximum spanning arborescence rooted at node 0 of a dense graph;
/// score[h][d] is the weight of arc h -> d, -inf bans an arc. Returns the
/// head of every node (entry 0 is -1). Ties go to the smaller head index.
std::vector<int> chu_liu_edmonds(const std::vector<std::vector<double>>& score);

/// Best tree under arc scores [(n+1) x n] (row = head 0..n, column =
/// dependent 1..n) with exactly one child of the root. heads[i] is the
/// head of token i+1.
std::vector<int> decode_heads(const Tensor<double>& arc);

/// Sum of arc[heads[i]][i].
double tree_score(const Tensor<double>& arc, std::span<const int> heads);

/// Heads via decode_heads, then the best label of each chosen arc from
/// label scores [(n+1) x n x L]; label ties go to the smaller index.
ParseTree decode_tree(const Tensor<double>& arc, const Tensor<double>& labels,
                      std::span<const std::string> label_names);

/// Row-wise argmax of [n x L] scores, first index on ties.
std::vector<int> argmax_rows(const Tensor<double>& scores);

}  // namespace charparse
