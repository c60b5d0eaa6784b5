#pragma once

#include "pbng/constraints.hpp"
#include "pbng/mesh.hpp"

#include <algorithm>

namespace pbng {

/// A stencil is the node list of one coupling item: an element or a weak constraint.
using Stencil = std::vector<int>;
using Stencils = std::vector<Stencil>;

struct ColorPartition {
  std::vector<int> color_of;
  std::vector<std::vector<int>> groups;

  int num_colors() const { return static_cast<int>(groups.size()); }

  /// Groups are listed in ascending color id, items ascending inside a group.
  static ColorPartition from_colors(std::vector<int> colors) {
    ColorPartition p;
    p.color_of = std::move(colors);
    int max_color = -1;
    for (int c : p.color_of) max_color = std::max(max_color, c);
    p.groups.resize(max_color + 1);
    for (int i = 0; i < static_cast<int>(p.color_of.size()); ++i)
      if (p.color_of[i] >= 0) p.groups[p.color_of[i]].push_back(i);
    return p;
  }

  bool operator==(const ColorPartition&) const = default;
};

template <int Dim>
Stencils element_stencils(const SimMesh<Dim>& mesh) {
  Stencils out;
  out.reserve(mesh.elements.size());
  for (const auto& el : mesh.elements) out.emplace_back(el.begin(), el.end());
  return out;
}

template <int Dim>
Stencils constraint_stencils(std::span<const WeakConstraint<Dim>> constraints) {
  Stencils out;
  out.reserve(constraints.size());
  for (const auto& c : constraints) out.push_back(c.nodes());
  return out;
}

namespace detail {

// item -> stencils containing it, CSR
struct Incidence {
  std::vector<int> offsets;
  std::vector<int> entries;

  Incidence(int num_items, const Stencils& stencils) : offsets(num_items + 1, 0) {
    for (const auto& s : stencils)
      for (int v : s) ++offsets[v + 1];
    for (int i = 0; i < num_items; ++i) offsets[i + 1] += offsets[i];
    entries.resize(offsets.back());
    std::vector<int> cursor(offsets.begin(), offsets.end() - 1);
    for (int c = 0; c < static_cast<int>(stencils.size()); ++c)
      for (int v : stencils[c]) entries[cursor[v]++] = c;
  }

  std::span<const int> of(int item) const {
    return {entries.data() + offsets[item], static_cast<std::size_t>(offsets[item + 1] - offsets[item])};
  }
};

class UsedColors {
 public:
  void mark(int c) {
    if (c < 0) return;
    if (c >= static_cast<int>(flags_.size())) flags_.resize(c + 1, 0);
    if (!flags_[c]) {
      flags_[c] = 1;
      marked_.push_back(c);
    }
  }
  bool contains(int c) const { return c >= 0 && c < static_cast<int>(flags_.size()) && flags_[c]; }
  int smallest_free() const {
    int c = 0;
    while (contains(c)) ++c;
    return c;
  }
  void clear() {
    for (int c : marked_) flags_[c] = 0;
    marked_.clear();
  }

 private:
  std::vector<char> flags_;
  std::vector<int> marked_;
};

}  // namespace detail

/// Greedy node coloring in ascending node order: a node takes the smallest
/// color absent from the used-color sets of all stencils it belongs to.
inline ColorPartition color_nodes(int num_nodes, const Stencils& stencils) {
  detail::Incidence inc(num_nodes, stencils);
  std::vector<std::vector<int>> used_by_stencil(stencils.size());
  std::vector<int> color(num_nodes, -1);
  detail::UsedColors used;
  for (int i = 0; i < num_nodes; ++i) {
    for (int s : inc.of(i))
      for (int c : used_by_stencil[s]) used.mark(c);
    color[i] = used.smallest_free();
    used.clear();
    for (int s : inc.of(i)) used_by_stencil[s].push_back(color[i]);
  }
  return ColorPartition::from_colors(std::move(color));
}

template <int Dim>
ColorPartition color_nodes(const SimMesh<Dim>& mesh, std::span<const WeakConstraint<Dim>> constraints) {
  Stencils st = element_stencils(mesh);
  for (auto& s : constraint_stencils<Dim>(constraints)) st.push_back(std::move(s));
  return color_nodes(mesh.num_nodes(), st);
}

/// Greedy constraint coloring in ascending constraint order: each node keeps
/// the set of colors taken by its constraints.
inline ColorPartition color_constraints(int num_nodes, const Stencils& constraint_nodes) {
  std::vector<std::vector<int>> used_by_node(num_nodes);
  std::vector<int> color(constraint_nodes.size(), -1);
  detail::UsedColors used;
  for (int c = 0; c < static_cast<int>(constraint_nodes.size()); ++c) {
    for (int v : constraint_nodes[c])
      for (int k : used_by_node[v]) used.mark(k);
    color[c] = used.smallest_free();
    used.clear();
    for (int v : constraint_nodes[c]) used_by_node[v].push_back(color[c]);
  }
  return ColorPartition::from_colors(std::move(color));
}

/// Repairs a node partition after stencils were added. Only nodes of the added
/// stencils are revisited; each keeps its previous color when still free.
/// `current` must already contain the added stencils. Nodes whose color
/// changed are appended to `recolored` when given.
inline ColorPartition incremental_recolor(const ColorPartition& previous, const Stencils& current,
                                          const Stencils& added, std::vector<int>* recolored = nullptr) {
  std::vector<int> extra;
  for (const auto& s : added) extra.insert(extra.end(), s.begin(), s.end());
  if (extra.empty()) return previous;
  std::sort(extra.begin(), extra.end());
  extra.erase(std::unique(extra.begin(), extra.end()), extra.end());

  const int num_nodes = static_cast<int>(previous.color_of.size());
  detail::Incidence inc(num_nodes, current);
  std::vector<int> color = previous.color_of;
  detail::UsedColors used;
  for (int x : extra) {
    for (int s : inc.of(x))
      for (int v : current[s])
        if (v != x) used.mark(color[v]);
    const int guess = color[x];
    const int chosen = (guess >= 0 && !used.contains(guess)) ? guess : used.smallest_free();
    used.clear();
    if (chosen != guess) {
      color[x] = chosen;
      if (recolored) recolored->push_back(x);
    }
  }
  return ColorPartition::from_colors(std::move(color));
}

/// Independent validity oracle: every stencil's nodes carry pairwise distinct colors.
inline bool valid_node_coloring(const ColorPartition& p, const Stencils& stencils) {
  for (const auto& s : stencils)
    for (std::size_t a = 0; a < s.size(); ++a) {
      if (p.color_of[s[a]] < 0) return false;
      for (std::size_t b = a + 1; b < s.size(); ++b)
        if (s[a] != s[b] && p.color_of[s[a]] == p.color_of[s[b]]) return false;
    }
  return true;
}

/// Independent validity oracle for constraint mode: constraints sharing a node differ in color.
inline bool valid_constraint_coloring(const ColorPartition& p, int num_nodes, const Stencils& constraint_nodes) {
  std::vector<std::vector<int>> by_node(num_nodes);
  for (int c = 0; c < static_cast<int>(constraint_nodes.size()); ++c) {
    if (p.color_of[c] < 0) return false;
    for (int v : constraint_nodes[c]) by_node[v].push_back(p.color_of[c]);
  }
  for (auto& colors : by_node) {
    std::sort(colors.begin(), colors.end());
    if (std::adjacent_find(colors.begin(), colors.end()) != colors.end()) return false;
  }
  return true;
}

/// Partition sanity: groups cover every item exactly once and agree with color_of.
inline bool groups_partition_items(const ColorPartition& p) {
  std::vector<int> seen(p.color_of.size(), 0);
  for (int c = 0; c < p.num_colors(); ++c)
    for (int i : p.groups[c]) {
      if (i < 0 || i >= static_cast<int>(seen.size()) || p.color_of[i] != c) return false;
      ++seen[i];
    }
  return std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; });
}

}  // namespace pbng
