#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include "gasket/error.hpp"
#include "gasket/harmonic.hpp"
#include "gasket/parallel.hpp"
#include "gasket/word.hpp"

namespace gasket {

using Int128 = __int128;

inline constexpr int kMaxKusuokaLevel = 12;
inline constexpr int kMaxTraceLevel = 13;

inline BigInt to_bigint(Int128 v) {
    const bool neg = v < 0;
    unsigned __int128 u = neg ? static_cast<unsigned __int128>(-v) : static_cast<unsigned __int128>(v);
    BigInt r = static_cast<std::uint64_t>(u >> 64);
    r <<= 64;
    r += static_cast<std::uint64_t>(u & 0xFFFFFFFFFFFFFFFFULL);
    return neg ? BigInt(-r) : r;
}

namespace detail {

/// B_{w i} = (5 A_i) B_w.
inline Mat3I extend_product(const Mat3I& b, int symbol) {
    const auto& a = kHarmonicTimes5[static_cast<std::size_t>(symbol - 1)];
    Mat3I r{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            std::int64_t s = 0;
            for (int k = 0; k < 3; ++k) s += a[i][k] * b[k][j];
            r[i][j] = s;
        }
    return r;
}

inline constexpr Mat3I kIdentity{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};

/// 3 tr(B^t P B) = 3 sum B_ij^2 - sum_j (column sum j)^2, an exact integer.
inline Int128 three_trace_btpb(const Mat3I& b) {
    Int128 s2 = 0, s1 = 0;
    for (int j = 0; j < 3; ++j) {
        Int128 col = 0;
        for (int i = 0; i < 3; ++i) {
            s2 += static_cast<Int128>(b[i][j]) * b[i][j];
            col += b[i][j];
        }
        s1 += col * col;
    }
    return 3 * s2 - s1;
}

inline Int128 pow_int(Int128 base, int e) {
    Int128 r = 1;
    for (int i = 0; i < e; ++i) r *= base;
    return r;
}

}  // namespace detail

/// Exact Kusuoka cell masses mu(S_w) = (1/2) (5/3)^m tr(A_w^t P A_w) at one level.
///
/// With B_w = 5^m A_w (an integer matrix), mu(S_w) = N_w / D_m where
/// N_w = 3 tr(B_w^t P B_w) and D_m = 2 * 3^(m+1) * 5^m, so all masses at a
/// level share the denominator D_m and additivity is integer arithmetic.
class KusuokaWeights {
public:
    int level() const noexcept { return level_; }
    std::size_t size() const noexcept { return numerators_.size(); }

    /// Unreduced numerator over common_denominator().
    Int128 numerator(std::size_t cell) const { return numerators_[cell]; }
    Int128 common_denominator() const noexcept { return denominator_; }

    Rational weight(std::size_t cell) const { return Rational(to_bigint(numerators_[cell]), to_bigint(denominator_)); }
    Rational weight(const Word& w) const { return weight(checked_index(w)); }

    double value(std::size_t cell) const { return values_[cell]; }
    double value(const Word& w) const { return values_[checked_index(w)]; }
    const std::vector<double>& values() const noexcept { return values_; }

    friend KusuokaWeights kusuoka_weights(int m);

private:
    std::size_t checked_index(const Word& w) const {
        if (w.size() != level_) throw NotFoundError("word '" + w.str() + "' is not a level-" + std::to_string(level_) + " cell");
        return static_cast<std::size_t>(w.index());
    }

    int level_ = 0;
    Int128 denominator_ = 1;
    std::vector<Int128> numerators_;
    std::vector<double> values_;
};

inline KusuokaWeights kusuoka_weights(int m) {
    if (m < 0) throw DomainError("level must be nonnegative");
    if (m > kMaxKusuokaLevel)
        throw ResourceLimitError("Kusuoka weights are enumerated up to level " + std::to_string(kMaxKusuokaLevel));
    std::vector<Mat3I> products{detail::kIdentity};
    for (int l = 1; l <= m; ++l) {
        std::vector<Mat3I> next(products.size() * 3);
        for (std::size_t c = 0; c < products.size(); ++c)
            for (int i = 0; i < 3; ++i) next[3 * c + static_cast<std::size_t>(i)] = detail::extend_product(products[c], i + 1);
        products.swap(next);
    }
    KusuokaWeights kw;
    kw.level_ = m;
    kw.denominator_ = 2 * detail::pow_int(3, m + 1) * detail::pow_int(5, m);
    kw.numerators_.resize(products.size());
    kw.values_.resize(products.size());
    const long double den = static_cast<long double>(kw.denominator_);
    for (std::size_t c = 0; c < products.size(); ++c) {
        kw.numerators_[c] = detail::three_trace_btpb(products[c]);
        kw.values_[c] = static_cast<double>(static_cast<long double>(kw.numerators_[c]) / den);
    }
    return kw;
}

/// Process-wide cache of weight tables.
inline std::shared_ptr<const KusuokaWeights> shared_kusuoka_weights(int m) {
    static std::mutex mutex;
    static std::map<int, std::shared_ptr<const KusuokaWeights>> cache;
    std::lock_guard lock(mutex);
    auto& slot = cache[m];
    if (!slot) slot = std::make_shared<const KusuokaWeights>(kusuoka_weights(m));
    return slot;
}

/// mu(S_w) for a single word of any length, in floating point.
inline double kusuoka_mass(const Word& w) {
    if (w.size() <= kMaxTraceLevel) {
        Mat3I b = detail::kIdentity;
        for (int i = 0; i < w.size(); ++i) b = detail::extend_product(b, w[i]);
        const long double den = 2.0L * std::pow(3.0L, w.size() + 1) * std::pow(5.0L, w.size());
        return static_cast<double>(static_cast<long double>(detail::three_trace_btpb(b)) / den);
    }
    // P A_w = Y_w P, so tr(A^t P A) = |Y_w P|^2 without cancellation
    const auto& h = HarmonicMatrices::get();
    const Eigen::Matrix3d p = to_double(h.P);
    Eigen::Matrix3d y = p;
    for (int i = 0; i < w.size(); ++i) y = to_double(h.Y[static_cast<std::size_t>(w[i] - 1)]) * y;
    return 0.5 * std::pow(5.0 / 3.0, w.size()) * y.squaredNorm();
}

/// Per-level extremes of tr(Y_w^t Y_w)^(1/m) over all words of length m.
struct TraceLimits {
    std::vector<int> levels;
    std::vector<double> max_curve;
    std::vector<double> min_curve;
    std::vector<Word> argmax;
    std::vector<Word> argmin;
};

namespace detail {

struct TraceExtremes {
    std::vector<Int128> max_n, min_n;
    std::vector<std::uint64_t> max_idx, min_idx;
};

inline void trace_dfs(const Mat3I& b, int depth, int m_max, std::uint64_t idx, TraceExtremes& ex) {
    if (depth > 0) {
        const Int128 n = three_trace_btpb(b);
        const auto d = static_cast<std::size_t>(depth);
        // ties keep the lexicographically first word
        if (n > ex.max_n[d] || (n == ex.max_n[d] && idx < ex.max_idx[d])) {
            ex.max_n[d] = n;
            ex.max_idx[d] = idx;
        }
        if (n < ex.min_n[d] || (n == ex.min_n[d] && idx < ex.min_idx[d])) {
            ex.min_n[d] = n;
            ex.min_idx[d] = idx;
        }
    }
    if (depth == m_max) return;
    for (int i = 1; i <= 3; ++i) trace_dfs(extend_product(b, i), depth + 1, m_max, idx * 3 + static_cast<std::uint64_t>(i - 1), ex);
}

}  // namespace detail

/// Exhaustive scan of tr(Y_w^t Y_w) = tr(A_w^t P A_w) for all words up to length m_max.
inline TraceLimits trace_limits(int m_max) {
    if (m_max < 1) throw DomainError("trace_limits needs m_max >= 1");
    if (m_max > kMaxTraceLevel)
        throw ResourceLimitError("trace_limits enumerates words up to length " + std::to_string(kMaxTraceLevel));
    const auto n = static_cast<std::size_t>(m_max + 1);
    auto fresh = [n] {
        detail::TraceExtremes ex;
        ex.max_n.assign(n, std::numeric_limits<Int128>::min());
        ex.min_n.assign(n, std::numeric_limits<Int128>::max());
        ex.max_idx.assign(n, std::numeric_limits<std::uint64_t>::max());
        ex.min_idx.assign(n, std::numeric_limits<std::uint64_t>::max());
        return ex;
    };
    // Chunk by the first two symbols.
    std::vector<detail::TraceExtremes> parts(9, fresh());
    const int head = std::min(2, m_max);
    const std::size_t heads = static_cast<std::size_t>(pow3(head));
    parallel_chunks(heads, heads, [&](std::size_t begin, std::size_t, std::size_t chunk) {
        const Word w = Word::from_index(begin, head);
        auto& ex = parts[chunk];
        Mat3I b = detail::kIdentity;
        for (int d = 0; d < head; ++d) {
            b = detail::extend_product(b, w[d]);
            // record the prefix levels once, from the first chunk of each prefix
            const auto dd = static_cast<std::size_t>(d + 1);
            const Int128 nn = detail::three_trace_btpb(b);
            const std::uint64_t idx = w.prefix(d + 1).index();
            if (nn > ex.max_n[dd] || (nn == ex.max_n[dd] && idx < ex.max_idx[dd])) {
                ex.max_n[dd] = nn;
                ex.max_idx[dd] = idx;
            }
            if (nn < ex.min_n[dd] || (nn == ex.min_n[dd] && idx < ex.min_idx[dd])) {
                ex.min_n[dd] = nn;
                ex.min_idx[dd] = idx;
            }
        }
        if (m_max > head)
            for (int i = 1; i <= 3; ++i)
                detail::trace_dfs(detail::extend_product(b, i), head + 1, m_max, begin * 3 + static_cast<std::uint64_t>(i - 1), ex);
    });

    auto total = fresh();
    for (std::size_t c = 0; c < heads; ++c)
        for (std::size_t d = 1; d < n; ++d) {
            const auto& p = parts[c];
            if (p.max_idx[d] == std::numeric_limits<std::uint64_t>::max()) continue;
            if (p.max_n[d] > total.max_n[d] || (p.max_n[d] == total.max_n[d] && p.max_idx[d] < total.max_idx[d])) {
                total.max_n[d] = p.max_n[d];
                total.max_idx[d] = p.max_idx[d];
            }
            if (p.min_n[d] < total.min_n[d] || (p.min_n[d] == total.min_n[d] && p.min_idx[d] < total.min_idx[d])) {
                total.min_n[d] = p.min_n[d];
                total.min_idx[d] = p.min_idx[d];
            }
        }

    TraceLimits out;
    for (int m = 1; m <= m_max; ++m) {
        const auto d = static_cast<std::size_t>(m);
        // tr = N / (3 * 25^m)
        const long double scale = 3.0L * std::pow(25.0L, m);
        out.levels.push_back(m);
        out.max_curve.push_back(static_cast<double>(std::pow(static_cast<long double>(total.max_n[d]) / scale, 1.0L / m)));
        out.min_curve.push_back(static_cast<double>(std::pow(static_cast<long double>(total.min_n[d]) / scale, 1.0L / m)));
        out.argmax.push_back(Word::from_index(total.max_idx[d], m));
        out.argmin.push_back(Word::from_index(total.min_idx[d], m));
    }
    return out;
}

}  // namespace gasket
