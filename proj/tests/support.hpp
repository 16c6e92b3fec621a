#pragma once

#include <doctest.h>
#include <mvmom/error.hpp>
#include <mvmom/types.hpp>

#include <algorithm>
#include <vector>

namespace testing {

inline double max_abs_diff(const mvmom::Matrix& a, const mvmom::Matrix& b) {
  REQUIRE(a.rows() == b.rows());
  REQUIRE(a.cols() == b.cols());
  return (a - b).cwiseAbs().maxCoeff();
}

template <class F>
mvmom::ErrorCode error_of(F&& f) {
  try {
    f();
  } catch (const mvmom::Error& e) {
    return e.code();
  }
  FAIL("expected an mvmom::Error");
  return mvmom::ErrorCode::kInvalidArgument;
}

inline std::vector<double> sorted(const mvmom::Vector& v) {
  std::vector<double> out(v.data(), v.data() + v.size());
  std::sort(out.begin(), out.end());
  return out;
}

inline mvmom::Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  mvmom::Matrix m(static_cast<mvmom::Index>(rows.size()), static_cast<mvmom::Index>(rows.begin()->size()));
  mvmom::Index i = 0;
  for (const auto& r : rows) {
    mvmom::Index j = 0;
    for (double x : r) m(i, j++) = x;
    ++i;
  }
  return m;
}

inline mvmom::Vector vec(std::initializer_list<double> xs) {
  mvmom::Vector v(static_cast<mvmom::Index>(xs.size()));
  mvmom::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

}  // namespace testing
