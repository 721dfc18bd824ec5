#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "voxcur/core/errors.hpp"

namespace voxcur {

/// Integer voxel coordinate / extent, (x, y, z).
struct Vec3i {
    int x = 0, y = 0, z = 0;

    bool operator==(const Vec3i&) const = default;
};

/// Multi-channel 3D volume, channel-major then x, y, z in C order:
/// index = ((c * X + x) * Y + y) * Z + z.
template <typename T>
struct Volume {
    int c = 0, x = 0, y = 0, z = 0;
    std::vector<T> data;

    Volume() = default;
    Volume(int c_, int x_, int y_, int z_)
        : c(c_), x(x_), y(y_), z(z_),
          data(static_cast<std::size_t>(c_) * x_ * y_ * z_, T(0)) {}

    std::size_t spatial_size() const {
        return static_cast<std::size_t>(x) * y * z;
    }
    std::size_t size() const { return data.size(); }

    T& at(int ci, int xi, int yi, int zi) {
        return data[((static_cast<std::size_t>(ci) * x + xi) * y + yi) * z + zi];
    }
    T at(int ci, int xi, int yi, int zi) const {
        return data[((static_cast<std::size_t>(ci) * x + xi) * y + yi) * z + zi];
    }

    T* channel(int ci) { return data.data() + static_cast<std::size_t>(ci) * spatial_size(); }
    const T* channel(int ci) const {
        return data.data() + static_cast<std::size_t>(ci) * spatial_size();
    }

    Vec3i shape() const { return {x, y, z}; }

    template <typename U>
    Volume<U> cast() const {
        Volume<U> out(c, x, y, z);
        std::transform(data.begin(), data.end(), out.data.begin(),
                       [](T v) { return static_cast<U>(v); });
        return out;
    }
};

/// Batched activation tensor (n, c, x, y, z), same C-order layout per sample.
template <typename T>
struct Batch {
    int n = 0, c = 0, x = 0, y = 0, z = 0;
    std::vector<T> data;

    Batch() = default;
    Batch(int n_, int c_, int x_, int y_, int z_)
        : n(n_), c(c_), x(x_), y(y_), z(z_),
          data(static_cast<std::size_t>(n_) * c_ * x_ * y_ * z_, T(0)) {}

    std::size_t sample_size() const {
        return static_cast<std::size_t>(c) * x * y * z;
    }
    std::size_t spatial_size() const {
        return static_cast<std::size_t>(x) * y * z;
    }
    std::size_t size() const { return data.size(); }

    T* sample(int ni) { return data.data() + ni * sample_size(); }
    const T* sample(int ni) const { return data.data() + ni * sample_size(); }

    T& at(int ni, int ci, int xi, int yi, int zi) {
        return data[(((static_cast<std::size_t>(ni) * c + ci) * x + xi) * y + yi) * z + zi];
    }
    T at(int ni, int ci, int xi, int yi, int zi) const {
        return data[(((static_cast<std::size_t>(ni) * c + ci) * x + xi) * y + yi) * z + zi];
    }

    bool same_shape(const Batch& o) const {
        return n == o.n && c == o.c && x == o.x && y == o.y && z == o.z;
    }
};

/// Copy one Volume into slot `ni` of a Batch (shapes must agree).
template <typename T>
void set_batch_sample(Batch<T>& b, int ni, const Volume<T>& v) {
    if (v.c != b.c || v.x != b.x || v.y != b.y || v.z != b.z)
        throw ShapeError("set_batch_sample: volume shape does not match batch");
    std::copy(v.data.begin(), v.data.end(), b.sample(ni));
}

inline std::string shape_string(int c, int x, int y, int z) {
    return std::to_string(c) + "x" + std::to_string(x) + "x" +
           std::to_string(y) + "x" + std::to_string(z);
}

}  // namespace voxcur
