#pragma once

#include <array>
#include <cstdint>

#include <Eigen/Dense>
#include <boost/multiprecision/cpp_int.hpp>

namespace gasket {

using Rational = boost::multiprecision::cpp_rational;
using BigInt = boost::multiprecision::cpp_int;
using Mat3Q = std::array<std::array<Rational, 3>, 3>;
using Mat3I = std::array<std::array<std::int64_t, 3>, 3>;

/// Harmonic extension matrices: row j of A_i maps boundary values
/// (u(q0), u(q1), u(q2)) to u(F_i(q_j)).
inline constexpr std::array<Mat3I, 3> kHarmonicTimes5{{
    {{{5, 0, 0}, {2, 2, 1}, {2, 1, 2}}},
    {{{2, 2, 1}, {0, 5, 0}, {1, 2, 2}}},
    {{{2, 1, 2}, {1, 2, 2}, {0, 0, 5}}},
}};

inline Mat3Q operator*(const Mat3Q& x, const Mat3Q& y) {
    Mat3Q r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            Rational s = 0;
            for (int k = 0; k < 3; ++k) s += x[i][k] * y[k][j];
            r[i][j] = s;
        }
    return r;
}

inline Mat3Q operator+(const Mat3Q& x, const Mat3Q& y) {
    Mat3Q r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r[i][j] = x[i][j] + y[i][j];
    return r;
}

inline Mat3Q scaled(const Mat3Q& x, const Rational& s) {
    Mat3Q r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r[i][j] = x[i][j] * s;
    return r;
}

inline Mat3Q transpose(const Mat3Q& x) {
    Mat3Q r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r[i][j] = x[j][i];
    return r;
}

inline Rational trace(const Mat3Q& x) { return x[0][0] + x[1][1] + x[2][2]; }

inline Eigen::Matrix3d to_double(const Mat3Q& x) {
    Eigen::Matrix3d r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r(i, j) = static_cast<double>(x[i][j]);
    return r;
}

/// A_1, A_2, A_3, the projection P x = x - mean(x) and Y_i = P^t A_i P, exactly.
struct HarmonicMatrices {
    std::array<Mat3Q, 3> A;
    Mat3Q P;
    std::array<Mat3Q, 3> Y;

    static const HarmonicMatrices& get() {
        static const HarmonicMatrices h = [] {
            HarmonicMatrices m;
            for (int i = 0; i < 3; ++i)
                for (int r = 0; r < 3; ++r)
                    for (int c = 0; c < 3; ++c) m.A[i][r][c] = Rational(kHarmonicTimes5[i][r][c], 5);
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) m.P[r][c] = Rational(r == c ? 2 : -1, 3);
            for (int i = 0; i < 3; ++i) m.Y[i] = transpose(m.P) * m.A[i] * m.P;
            return m;
        }();
        return h;
    }

    Eigen::Matrix3d A_double(int i) const { return to_double(A[static_cast<std::size_t>(i)]); }
};

/// (5/3) sum_i A_i^t P A_i, which equals P.
inline Mat3Q energy_renormalization_sum() {
    const auto& h = HarmonicMatrices::get();
    Mat3Q s{};
    for (const auto& a : h.A) s = s + transpose(a) * h.P * a;
    return scaled(s, Rational(5, 3));
}

}  // namespace gasket
