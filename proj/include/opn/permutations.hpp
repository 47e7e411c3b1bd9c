#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "opn/rng.hpp"

namespace opn {

using Perm = std::vector<int>;

// Orderings of an n-tuple with each permutation and its reversal collapsed
// into one class: n!/2 classes total. The canonical representative of a class
// is the lexicographic minimum of {p, reverse(p)}; class ids follow the
// lexicographic order of canonical representatives. Supported n: 2..5.
struct PermutationTable {
    int n = 0;
    std::vector<Perm> canonicals;  // index == class_id

    static const PermutationTable& get(int n);

    int num_classes() const { return int(canonicals.size()); }
    int class_of(const Perm& p) const;
    const Perm& canonical_of(int class_id) const;
};

// n!/2 for n >= 2.
int num_classes(int n);

// Class id of p (validates that p is a permutation of 0..n-1).
int class_of(const Perm& p);

// Canonical representative for a class id.
Perm canonical_of_class(int n, int class_id);

inline Perm reversed(Perm p) {
    for (size_t i = 0, j = p.size() - 1; i < j; ++i, --j) std::swap(p[i], p[j]);
    return p;
}

// Uniform shuffle of positions 0..n-1 plus the matching class label.
// order[i] is the chronological index placed at shuffled position i; the
// label is the class of the permutation that restores chronological order
// (i.e. of order^-1, since gathering by order^-1 undoes the shuffle).
struct ShuffleResult {
    Perm order;
    int class_id = 0;
};
ShuffleResult shuffle_with_label(int n, Rng& rng);

inline Perm inverse_perm(const Perm& p) {
    Perm inv(p.size());
    for (size_t i = 0; i < p.size(); ++i) inv[size_t(p[i])] = int(i);
    return inv;
}

// Gather: out[i] = items[p[i]].
template <class V>
std::vector<V> apply_perm(const std::vector<V>& items, const Perm& p) {
    std::vector<V> out;
    out.reserve(items.size());
    for (int idx : p) out.push_back(items[size_t(idx)]);
    return out;
}

}  // namespace opn
