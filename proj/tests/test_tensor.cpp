#include "doctest.h"
#include "varigan/nn/tensor.hpp"

using namespace varigan;

TEST_CASE("tensor shape and indexing") {
  Tensor t({2, 3, 4});
  CHECK(t.ndim() == 3);
  CHECK(t.numel() == 24);
  CHECK(t.dim(1) == 3);
  t.at3(1, 2, 3) = 7.5;
  CHECK(t[1 * 12 + 2 * 4 + 3] == 7.5);

  Tensor q({2, 2, 2, 2}, 1.0);
  q.at4(1, 0, 1, 0) = -2.0;
  CHECK(q[8 + 2] == -2.0);
}

TEST_CASE("tensor fill and reshape preserve data") {
  Tensor t({2, 6});
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<double>(i);
  Tensor r = t.reshaped({3, 4});
  CHECK(r.dim(0) == 3);
  for (std::size_t i = 0; i < r.numel(); ++i) CHECK(r[i] == static_cast<double>(i));
  CHECK_THROWS(t.reshaped({5, 5}));

  t.fill(0.5);
  CHECK(t[7] == 0.5);
  t.zero();
  CHECK(t[7] == 0.0);
}

TEST_CASE("require_shape and shape_str") {
  Tensor t({2, 3});
  CHECK_NOTHROW(require_shape(t, {2, 3}, "t"));
  CHECK_THROWS(require_shape(t, {3, 2}, "t"));
  CHECK(shape_str(t) == "(2,3)");
}

TEST_CASE("concat and split along dim1") {
  Tensor a({2, 2}), b({2, 3});
  for (std::size_t i = 0; i < a.numel(); ++i) a[i] = 1.0 + static_cast<double>(i);
  for (std::size_t i = 0; i < b.numel(); ++i) b[i] = 10.0 + static_cast<double>(i);
  Tensor c = concat_dim1({&a, &b});
  CHECK(c.dim(0) == 2);
  CHECK(c.dim(1) == 5);
  CHECK(c[0] == 1.0);
  CHECK(c[2] == 10.0);
  CHECK(c[5] == 3.0);

  auto parts = split_dim1(c, {2, 3});
  CHECK(parts[0].same_shape(a));
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(parts[0][i] == a[i]);
  for (std::size_t i = 0; i < b.numel(); ++i) CHECK(parts[1][i] == b[i]);
}

TEST_CASE("concat and slice along dim0") {
  Tensor a({1, 2, 2}), b({2, 2, 2});
  a.fill(3.0);
  for (std::size_t i = 0; i < b.numel(); ++i) b[i] = static_cast<double>(i);
  Tensor c = concat_dim0({&a, &b});
  CHECK(c.dim(0) == 3);
  CHECK(c[0] == 3.0);
  CHECK(c[4] == 0.0);

  Tensor back = slice_dim0(c, 1, 3);
  CHECK(back.same_shape(b));
  for (std::size_t i = 0; i < b.numel(); ++i) CHECK(back[i] == b[i]);
}

TEST_CASE("all_finite flags bad values") {
  Tensor t({3}, 1.0);
  CHECK(all_finite(t));
  t[1] = std::numeric_limits<double>::infinity();
  CHECK_FALSE(all_finite(t));
  t[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(all_finite(t));
}
