#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace ldavae {

/// Dense row-major tensor of doubles. Rank 1 and 2 are what the library
/// actually uses; elementwise helpers work for any rank.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> s)
        : shape(std::move(s)), data(numel_of(shape), 0.0) {}

    Tensor(std::vector<std::size_t> s, std::vector<double> values)
        : shape(std::move(s)), data(std::move(values)) {
        if (data.size() != numel_of(shape))
            throw std::invalid_argument("Tensor: value count does not match shape");
    }

    static std::size_t numel_of(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t d : s) n *= d;
        return n;
    }

    static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }

    static Tensor full(std::vector<std::size_t> s, double v) {
        Tensor t(std::move(s));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor row(std::vector<double> values) {
        std::size_t n = values.size();
        return Tensor({1, n}, std::move(values));
    }

    std::size_t numel() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }

    std::size_t rows() const {
        assert(rank() == 2);
        return shape[0];
    }
    std::size_t cols() const {
        assert(rank() == 2);
        return shape[1];
    }

    double& at(std::size_t i, std::size_t j) {
        assert(rank() == 2 && i < shape[0] && j < shape[1]);
        return data[i * shape[1] + j];
    }
    double at(std::size_t i, std::size_t j) const {
        assert(rank() == 2 && i < shape[0] && j < shape[1]);
        return data[i * shape[1] + j];
    }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }

    Tensor& operator+=(const Tensor& o) {
        assert(same_shape(o));
        for (std::size_t i = 0; i < data.size(); ++i) data[i] += o.data[i];
        return *this;
    }

    Tensor& operator*=(double k) {
        for (double& v : data) v *= k;
        return *this;
    }

    double sum() const { return std::accumulate(data.begin(), data.end(), 0.0); }

    double norm2() const {
        double s = 0.0;
        for (double v : data) s += v * v;
        return std::sqrt(s);
    }

    std::string shape_str() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }
};

/// C = A * B for 2-d tensors, naive but cache-friendly (ikj order).
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows())
        throw std::invalid_argument("matmul: incompatible shapes " + a.shape_str() +
                                    " and " + b.shape_str());
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor c({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = &a.data[i * k];
        double* crow = &c.data[i * n];
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = &b.data[p * n];
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

}  // namespace ldavae
