#pragma once

#include <cstdint>
#include <vector>

namespace opn {

// 64-bit mix used both as the generator step and to derive substreams.
inline uint64_t mix64(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

inline uint64_t hash_combine(uint64_t a, uint64_t b) {
    return mix64(a + 0x9E3779B97F4A7C15ull * (b + 1));
}

// Deterministic splitmix64 generator. All draws are pure integer/float
// arithmetic (no libm), so sequences are bit-identical across platforms.
// Substreams are derived by hashing, not by sharing state, which lets the
// pipeline assign independent streams per clip / sample / step.
struct Rng {
    uint64_t state = 0;

    Rng() = default;
    explicit Rng(uint64_t seed) : state(seed) {}

    uint64_t next() {
        state += 0x9E3779B97F4A7C15ull;
        return mix64(state);
    }

    // Independent generator derived from the current state and a tag.
    Rng fork(uint64_t tag) { return Rng(hash_combine(next(), tag)); }

    double unit() { return double(next() >> 11) * 0x1.0p-53; }   // [0,1)
    float unitf() { return float(next() >> 40) * 0x1.0p-24f; }   // [0,1)

    // Inclusive range, unbiased (Lemire rejection via 128-bit multiply).
    int uniform_int(int lo, int hi) {
        uint64_t n = uint64_t(hi - lo) + 1;
        __uint128_t m = (__uint128_t)next() * n;
        return lo + int(uint64_t(m >> 64));
    }

    float uniform(float a, float b) { return a + (b - a) * unitf(); }

    // Irwin-Hall approximation (sum of 12 uniforms). Mean 0, variance 1,
    // support [-6,6]; pure float adds keep it bit-portable.
    float normal() {
        float acc = 0.0f;
        for (int i = 0; i < 12; ++i) acc += unitf();
        return acc - 6.0f;
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (int i = int(v.size()) - 1; i > 0; --i) {
            int j = uniform_int(0, i);
            std::swap(v[size_t(i)], v[size_t(j)]);
        }
    }
};

}  // namespace opn
