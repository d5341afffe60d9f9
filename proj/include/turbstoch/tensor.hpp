#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "turbstoch/errors.hpp"

namespace turbstoch {

// Batched multi-channel 1-d array, row-major [batch][channel][x].
// The single value type of the differentiable core; double precision throughout.
struct Tensor3 {
    int64_t batch = 0;
    int64_t channels = 0;
    int64_t length = 0;
    std::vector<double> data;

    Tensor3() = default;
    Tensor3(int64_t b, int64_t c, int64_t l, double fill = 0.0)
        : batch(b), channels(c), length(l), data(static_cast<size_t>(b * c * l), fill) {
        if (b < 1 || c < 1 || l < 1)
            throw ShapeError("Tensor3 dims must be >= 1, got (" + std::to_string(b) + "," +
                             std::to_string(c) + "," + std::to_string(l) + ")");
    }

    static Tensor3 scalar(double v) {
        Tensor3 t(1, 1, 1);
        t.data[0] = v;
        return t;
    }

    size_t size() const { return data.size(); }
    bool is_scalar() const { return batch == 1 && channels == 1 && length == 1; }
    bool same_shape(const Tensor3& o) const {
        return batch == o.batch && channels == o.channels && length == o.length;
    }
    std::string shape_str() const {
        return "(" + std::to_string(batch) + "," + std::to_string(channels) + "," +
               std::to_string(length) + ")";
    }

    double& at(int64_t b, int64_t c, int64_t x) { return data[size_t((b * channels + c) * length + x)]; }
    double at(int64_t b, int64_t c, int64_t x) const {
        return data[size_t((b * channels + c) * length + x)];
    }
    double* row(int64_t b, int64_t c) { return data.data() + (b * channels + c) * length; }
    const double* row(int64_t b, int64_t c) const {
        return data.data() + (b * channels + c) * length;
    }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

}  // namespace turbstoch
