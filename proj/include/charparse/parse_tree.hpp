#pragma once

#include <string>
#include <vector>

namespace charparse {

/// Predicted analysis of one sentence. heads[i] is the head of token i+1
/// (0 = root); labels and tags are parallel to heads.
struct ParseTree {
  std::vector<int> heads;
  std::vector<std::string> labels;
  std::vector<std::string> tags;

  std::size_t size() const { return heads.size(); }
};

/// True when `heads` is an arborescence rooted at 0 with exactly one child
/// of the root.
bool is_single_rooted_tree(const std::vector<int>& heads);

}  // namespace charparse
