#include "opn/permutations.hpp"

#include <algorithm>
#include <array>
#include <string>

#include "opn/errors.hpp"

namespace opn {

namespace {

void validate_n(int n) {
    if (n < 2 || n > 5)
        throw ConfigError("tuple length must be in [2,5], got " + std::to_string(n));
}

void validate_perm(const Perm& p) {
    int n = int(p.size());
    validate_n(n);
    std::array<bool, 8> seen{};
    for (int v : p) {
        if (v < 0 || v >= n) throw ConfigError("permutation element out of range: " + std::to_string(v));
        if (seen[size_t(v)]) throw ConfigError("repeated permutation element: " + std::to_string(v));
        seen[size_t(v)] = true;
    }
}

PermutationTable build_table(int n) {
    PermutationTable t;
    t.n = n;
    Perm p(size_t(n), 0);
    for (int i = 0; i < n; ++i) p[size_t(i)] = i;
    do {
        Perm r = reversed(p);
        const Perm& canon = (p <= r) ? p : r;
        if (canon == p) t.canonicals.push_back(p);
    } while (std::next_permutation(p.begin(), p.end()));
    // next_permutation enumerates lexicographically, so canonicals are sorted.
    return t;
}

}  // namespace

const PermutationTable& PermutationTable::get(int n) {
    validate_n(n);
    static const PermutationTable tables[] = {build_table(2), build_table(3), build_table(4),
                                              build_table(5)};
    return tables[n - 2];
}

int PermutationTable::class_of(const Perm& p) const {
    validate_perm(p);
    if (int(p.size()) != n) throw ConfigError("permutation length does not match table");
    Perm r = reversed(p);
    const Perm& canon = (p <= r) ? p : r;
    auto it = std::lower_bound(canonicals.begin(), canonicals.end(), canon);
    return int(it - canonicals.begin());
}

const Perm& PermutationTable::canonical_of(int class_id) const {
    if (class_id < 0 || class_id >= num_classes())
        throw ConfigError("class id out of range: " + std::to_string(class_id));
    return canonicals[size_t(class_id)];
}

int num_classes(int n) {
    if (n < 2) throw ConfigError("num_classes requires n >= 2, got " + std::to_string(n));
    validate_n(n);
    int fact = 1;
    for (int i = 2; i <= n; ++i) fact *= i;
    return fact / 2;
}

int class_of(const Perm& p) { return PermutationTable::get(int(p.size())).class_of(p); }

Perm canonical_of_class(int n, int class_id) {
    return PermutationTable::get(n).canonical_of(class_id);
}

ShuffleResult shuffle_with_label(int n, Rng& rng) {
    validate_n(n);
    ShuffleResult res;
    res.order.resize(size_t(n));
    for (int i = 0; i < n; ++i) res.order[size_t(i)] = i;
    rng.shuffle(res.order);
    res.class_id = class_of(inverse_perm(res.order));
    return res;
}

}  // namespace opn
