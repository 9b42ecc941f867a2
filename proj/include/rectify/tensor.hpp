#pragma once

#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace rectify {

// Dense row-major float32 tensor. All model-side math lives in these;
// probabilities and metrics use double (see distribution.hpp).
struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(numel_of(shape), 0.0f) {}
    Tensor(std::vector<int> s, std::vector<float> d) : shape(std::move(s)), data(std::move(d)) {
        if (numel_of(shape) != data.size()) throw std::invalid_argument("tensor shape/data mismatch");
    }

    static std::size_t numel_of(const std::vector<int>& s) {
        std::size_t n = 1;
        for (int d : s) {
            if (d < 0) throw std::invalid_argument("negative dimension");
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<int> s, float v) {
        Tensor t(std::move(s));
        for (float& x : t.data) x = v;
        return t;
    }
    static Tensor vec(std::initializer_list<float> vals) {
        Tensor t;
        t.shape = {static_cast<int>(vals.size())};
        t.data.assign(vals.begin(), vals.end());
        return t;
    }

    std::size_t numel() const { return data.size(); }
    int dim(int i) const { return shape.at(static_cast<std::size_t>(i)); }
    int rows() const { return shape.size() == 2 ? shape[0] : (shape.size() == 1 ? 1 : throw_rank()); }
    int cols() const { return shape.size() == 2 ? shape[1] : (shape.size() == 1 ? shape[0] : throw_rank()); }

    float& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols() + c]; }
    float at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols() + c]; }
    float& operator[](std::size_t i) { return data[i]; }
    float operator[](std::size_t i) const { return data[i]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    bool all_finite() const;
    std::string shape_str() const;

private:
    [[noreturn]] static int throw_rank() { throw std::logic_error("tensor rank is not 1 or 2"); }
};

void check_finite(const Tensor& t, const std::string& what);

}  // namespace rectify
