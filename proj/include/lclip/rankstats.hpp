#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <set>
#include <vector>

#include "lclip/error.hpp"

namespace lclip {

namespace detail {

inline void check_tau_input(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size())
    throw PreconditionError("kendall: length mismatch " + std::to_string(x.size()) + " vs " +
                            std::to_string(y.size()));
  if (x.size() < 2) throw PreconditionError("kendall: need at least 2 samples");
  for (double v : x)
    if (!std::isfinite(v)) throw PreconditionError("kendall: non-finite value in x");
  for (double v : y)
    if (!std::isfinite(v)) throw PreconditionError("kendall: non-finite value in y");
}

inline long tie_pairs(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  long t = 0;
  std::size_t i = 0;
  while (i < v.size()) {
    std::size_t j = i;
    while (j < v.size() && v[j] == v[i]) ++j;
    const long run = static_cast<long>(j - i);
    t += run * (run - 1) / 2;
    i = j;
  }
  return t;
}

// Merge-sort inversion count.
inline long count_inversions(std::vector<double>& v, std::vector<double>& tmp, std::size_t lo,
                             std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  long inv = count_inversions(v, tmp, lo, mid) + count_inversions(v, tmp, mid, hi);
  std::size_t a = lo, b = mid, o = lo;
  while (a < mid && b < hi) {
    if (v[b] < v[a]) {
      inv += static_cast<long>(mid - a);
      tmp[o++] = v[b++];
    } else {
      tmp[o++] = v[a++];
    }
  }
  while (a < mid) tmp[o++] = v[a++];
  while (b < hi) tmp[o++] = v[b++];
  std::copy(tmp.begin() + static_cast<long>(lo), tmp.begin() + static_cast<long>(hi),
            v.begin() + static_cast<long>(lo));
  return inv;
}

// Knight's O(n log n) concordant-minus-discordant via sorting + inversions.
struct PairCounts {
  long n0, n1, n2, n3;  // all pairs, tied-in-x, tied-in-y, tied-in-both
  long p_minus_q;
};

inline PairCounts knight_counts(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (x[a] != x[b]) return x[a] < x[b];
    return y[a] < y[b];
  });
  PairCounts c{};
  c.n0 = static_cast<long>(n) * (static_cast<long>(n) - 1) / 2;
  c.n1 = tie_pairs(x);
  c.n2 = tie_pairs(y);
  // Pairs tied in both: runs of equal (x, y).
  c.n3 = 0;
  {
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j < n && x[idx[j]] == x[idx[i]] && y[idx[j]] == y[idx[i]]) ++j;
      const long run = static_cast<long>(j - i);
      c.n3 += run * (run - 1) / 2;
      i = j;
    }
  }
  std::vector<double> ysorted(n), tmp(n);
  for (std::size_t i = 0; i < n; ++i) ysorted[i] = y[idx[i]];
  const long dis = count_inversions(ysorted, tmp, 0, n);
  c.p_minus_q = c.n0 - c.n1 - c.n2 + c.n3 - 2 * dis;
  return c;
}

inline long distinct_levels(const std::vector<double>& v) {
  return static_cast<long>(std::set<double>(v.begin(), v.end()).size());
}

}  // namespace detail

// Tie-corrected tau-b: (P - Q) / sqrt((P+Q+T_x)(P+Q+T_y)), pairs tied in both
// counted in neither tie term. Computed by sorting + inversion counting; the
// O(n^2) oracle below classifies pairs directly.
inline double kendall_tau_b(const std::vector<double>& x, const std::vector<double>& y) {
  detail::check_tau_input(x, y);
  const auto c = detail::knight_counts(x, y);
  const double dx = static_cast<double>(c.n0 - c.n1);
  const double dy = static_cast<double>(c.n0 - c.n2);
  if (dx == 0 || dy == 0)
    throw UndefinedCorrelationError("kendall_tau_b: all-tied vector, correlation undefined");
  return static_cast<double>(c.p_minus_q) / std::sqrt(dx * dy);
}

// Stuart's tau-c: (P - Q) * 2m / (n^2 (m - 1)), m = min(distinct levels).
inline double kendall_tau_c(const std::vector<double>& x, const std::vector<double>& y) {
  detail::check_tau_input(x, y);
  const long m = std::min(detail::distinct_levels(x), detail::distinct_levels(y));
  if (m < 2)
    throw UndefinedCorrelationError("kendall_tau_c: fewer than 2 distinct levels");
  const auto c = detail::knight_counts(x, y);
  const double n = static_cast<double>(x.size());
  return static_cast<double>(c.p_minus_q) * 2.0 * static_cast<double>(m) /
         (n * n * static_cast<double>(m - 1));
}

enum class TauVariant { b, c };

// Exhaustive pair classification; the independent oracle for both variants.
inline double brute_force_tau(const std::vector<double>& x, const std::vector<double>& y,
                              TauVariant variant) {
  detail::check_tau_input(x, y);
  const std::size_t n = x.size();
  long p = 0, q = 0, tx = 0, ty = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool xtie = x[i] == x[j], ytie = y[i] == y[j];
      if (xtie && ytie) continue;
      if (xtie) {
        ++tx;
      } else if (ytie) {
        ++ty;
      } else if ((x[i] < x[j]) == (y[i] < y[j])) {
        ++p;
      } else {
        ++q;
      }
    }
  if (variant == TauVariant::b) {
    const double dx = static_cast<double>(p + q + ty);
    const double dy = static_cast<double>(p + q + tx);
    if (dx == 0 || dy == 0)
      throw UndefinedCorrelationError("brute_force_tau: all-tied vector, correlation undefined");
    return static_cast<double>(p - q) / std::sqrt(dx * dy);
  }
  const long m = std::min(detail::distinct_levels(x), detail::distinct_levels(y));
  if (m < 2) throw UndefinedCorrelationError("brute_force_tau: fewer than 2 distinct levels");
  const double dn = static_cast<double>(n);
  return static_cast<double>(p - q) * 2.0 * static_cast<double>(m) /
         (dn * dn * static_cast<double>(m - 1));
}

}  // namespace lclip
