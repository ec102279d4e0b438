#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "cfdr/check.hpp"

namespace cfdr {

// Dense row-major matrix of doubles. Everything in the library is rank 2;
// scalars are 1x1 and vectors are n x 1.
struct Tensor {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {
        CFDR_CHECK(r >= 0 && c >= 0, "tensor: negative shape " << r << "x" << c);
    }
    Tensor(int r, int c, std::vector<double> d) : rows(r), cols(c), data(std::move(d)) {
        CFDR_CHECK(static_cast<size_t>(r) * c == data.size(),
                   "tensor: shape " << r << "x" << c << " does not match payload of "
                                    << data.size() << " values");
    }

    static Tensor scalar(double v) { return Tensor(1, 1, {v}); }
    static Tensor column(std::vector<double> d) {
        const int n = static_cast<int>(d.size());
        return Tensor(n, 1, std::move(d));
    }

    size_t size() const { return data.size(); }
    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

    std::vector<double> col(int c) const {
        CFDR_CHECK(c >= 0 && c < cols, "tensor: column " << c << " out of " << cols);
        std::vector<double> out(static_cast<size_t>(rows));
        for (int r = 0; r < rows; ++r) out[static_cast<size_t>(r)] = at(r, c);
        return out;
    }

    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

    bool finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void fill(double v) {
        for (double& x : data) x = v;
    }
};

inline void check_finite(const Tensor& t, const char* what) {
    CFDR_CHECK(t.finite(), what << ": non-finite value encountered");
}

}  // namespace cfdr
