#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "opn/errors.hpp"

namespace opn {

// Dense row-major tensor. The production dtype is float; tests instantiate
// the same code with double for finite-difference oracles.
template <class T>
struct TensorT {
    std::vector<int> shape;
    std::vector<T> data;

    TensorT() = default;

    explicit TensorT(std::vector<int> s) : shape(std::move(s)) {
        data.assign(size_t(numel_of(shape)), T(0));
    }

    TensorT(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        if (data.size() != size_t(numel_of(shape)))
            throw ShapeError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape product " + std::to_string(numel_of(shape)));
    }

    static long long numel_of(const std::vector<int>& s) {
        long long n = 1;
        for (int e : s) {
            if (e < 1) throw ShapeError("tensor extent must be >= 1, got " + std::to_string(e));
            n *= e;
        }
        return n;
    }

    static TensorT zeros(std::vector<int> s) { return TensorT(std::move(s)); }

    static TensorT full(std::vector<int> s, T v) {
        TensorT t(std::move(s));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    int ndim() const { return int(shape.size()); }
    int dim(int i) const { return shape[size_t(i)]; }
    long long numel() const { return (long long)data.size(); }

    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }

    T& operator[](size_t i) { return data[i]; }
    const T& operator[](size_t i) const { return data[i]; }

    T& at2(int i, int j) { return data[size_t(i) * dim(1) + j]; }
    const T& at2(int i, int j) const { return data[size_t(i) * dim(1) + j]; }

    T& at3(int i, int j, int k) { return data[(size_t(i) * dim(1) + j) * dim(2) + k]; }
    const T& at3(int i, int j, int k) const { return data[(size_t(i) * dim(1) + j) * dim(2) + k]; }

    T& at4(int i, int j, int k, int l) {
        return data[((size_t(i) * dim(1) + j) * size_t(dim(2)) + k) * dim(3) + l];
    }
    const T& at4(int i, int j, int k, int l) const {
        return data[((size_t(i) * dim(1) + j) * size_t(dim(2)) + k) * dim(3) + l];
    }

    TensorT reshaped(std::vector<int> s) const {
        if (numel_of(s) != numel())
            throw ShapeError("reshape changes element count");
        TensorT t;
        t.shape = std::move(s);
        t.data = data;
        return t;
    }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(double(v))) return false;
        return true;
    }

    std::string shape_str() const {
        std::string s = "[";
        for (size_t i = 0; i < shape.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }
};

using Tensor = TensorT<float>;

template <class T>
inline void check_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* where) {
    if (a.shape != b.shape)
        throw ShapeError(std::string(where) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

}  // namespace opn
