/* DeskST - a desk-scale end-to-end speech translation toolkit.
 * Copyright (C) 2026 DeskST Authors. All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "deskst/grad_check.hpp"
#include "deskst/tensor.hpp"

using namespace deskst;

namespace {

template <class S>
Mat<S> random_mat(Index r, Index c, uint64_t seed, double lo = -1.0,
                  double hi = 1.0) {
  std::mt19937_64 g(seed);
  Mat<S> m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j)
      m(i, j) = static_cast<S>(uniform_real(g, lo, hi));
  return m;
}

// Scalar-loop matrix product, the independent reference for matmul.
template <class S>
Mat<S> matmul_ref(const Mat<S>& a, const Mat<S>& b) {
  Mat<S> c = Mat<S>::Zero(a.rows(), b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index k = 0; k < a.cols(); ++k)
      for (Index j = 0; j < b.cols(); ++j) c(i, j) += a(i, k) * b(k, j);
  return c;
}

}  // namespace

TEST_CASE("tensor shape and storage invariants") {
  TensorF t = TensorF::from_flat({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.numel() == shape_numel(t.shape()));
  CHECK(t.m()(0, 2) == 3.0f);
  CHECK(t.m()(1, 0) == 4.0f);

  TensorF v = TensorF::from_vector({1, 2, 3});
  CHECK(v.rank() == 1);
  CHECK(v.numel() == 3);

  TensorF s = TensorF::scalar(4.0f);
  CHECK(s.rank() == 0);
  CHECK(s.item() == 4.0f);

  CHECK_THROWS_AS(TensorF::from_flat({2, 2}, {1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(TensorF::zeros({0, 3}), DimensionError);
}

TEST_CASE("matmul identity and unit-column cases") {
  MatF id = MatF::Identity(2, 2);
  MatF m(2, 2);
  m << 5, 6, 7, 8;
  TensorF r = matmul(TensorF::from_matrix(id), TensorF::from_matrix(m));
  CHECK(r.m() == m);

  MatF a(2, 2), b(2, 1);
  a << 1, 2, 3, 4;
  b << 0, 1;
  TensorF c = matmul(TensorF::from_matrix(a), TensorF::from_matrix(b));
  CHECK(c.m()(0, 0) == 2.0f);
  CHECK(c.m()(1, 0) == 4.0f);

  CHECK_THROWS_AS(
      matmul(TensorF::zeros({2, 3}), TensorF::zeros({2, 3})), DimensionError);
  CHECK_THROWS_WITH_AS(
      matmul(TensorF::zeros({2, 3}), TensorF::zeros({4, 2})),
      doctest::Contains("[2x3]"), DimensionError);
}

TEST_CASE("matmul matches scalar-loop reference and transpose flags work") {
  MatF a = random_mat<float>(3, 4, 11);
  MatF b = random_mat<float>(4, 2, 12);
  TensorF ta = TensorF::from_matrix(a), tb = TensorF::from_matrix(b);
  CHECK((matmul(ta, tb).m() - matmul_ref(a, b)).cwiseAbs().maxCoeff() < 1e-6f);

  MatF bt = b.transpose();
  CHECK((matmul(ta, TensorF::from_matrix(bt), false, true).m() -
         matmul_ref(a, b))
            .cwiseAbs()
            .maxCoeff() < 1e-6f);
  MatF at = a.transpose();
  CHECK((matmul(TensorF::from_matrix(at), tb, true, false).m() -
         matmul_ref(a, b))
            .cwiseAbs()
            .maxCoeff() < 1e-6f);
}

TEST_CASE("matmul gradient vs central differences") {
  for (uint64_t seed : {7u, 8u}) {
    std::vector<TensorF> inputs = {
        TensorF::from_matrix(random_mat<float>(3, 4, seed), true),
        TensorF::from_matrix(random_mat<float>(4, 2, seed + 100), true)};
    auto f = [](const std::vector<TensorF>& in) {
      return sum(matmul(in[0], in[1]));
    };
    float err = grad_check<float>(f, inputs, 1e-3f);
    CHECK(err < 1e-3f);
  }
}

TEST_CASE("softmax symmetry, stability, and axis handling") {
  TensorF u = softmax(TensorF::from_vector({0, 0, 0}), 0);
  for (int j = 0; j < 3; ++j)
    CHECK(u.m()(0, j) == doctest::Approx(1.0 / 3.0).epsilon(1e-6));

  TensorF big = softmax(TensorF::from_vector({1000.0f, 0.0f}), 0);
  CHECK(big.all_finite());
  CHECK(big.m()(0, 0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(big.m()(0, 1) == doctest::Approx(0.0).epsilon(1e-6));

  MatF x = random_mat<float>(4, 5, 3, -10000.0, 10000.0);
  TensorF rows = softmax(TensorF::from_matrix(x), 1);
  for (Index i = 0; i < 4; ++i)
    CHECK(rows.m().row(i).sum() == doctest::Approx(1.0).epsilon(1e-6));
  TensorF cols = softmax(TensorF::from_matrix(x), 0);
  for (Index j = 0; j < 5; ++j)
    CHECK(cols.m().col(j).sum() == doctest::Approx(1.0).epsilon(1e-6));

  CHECK_THROWS_AS(softmax(TensorF::zeros({2, 2}), 3), DimensionError);
  MatF bad(1, 2);
  bad << 1.0f, std::nanf("");
  CHECK_THROWS_AS(softmax(TensorF::from_matrix(bad), 1), NumericError);
}

TEST_CASE("softmax Jacobian vs finite differences") {
  // Every entry of the 2x5 Jacobian is exercised by probing each output
  // coordinate as its own scalar function.
  MatD x0 = random_mat<double>(2, 5, 21);
  for (Index r = 0; r < 2; ++r) {
    for (Index c = 0; c < 5; ++c) {
      std::vector<TensorD> inputs = {TensorD::from_matrix(x0, true)};
      MatD pick = MatD::Zero(2, 5);
      pick(r, c) = 1.0;
      auto f = [&pick](const std::vector<TensorD>& in) {
        return sum(mul(softmax(in[0], 1), TensorD::from_matrix(pick)));
      };
      CHECK(grad_check<double>(f, inputs, 1e-5) < 1e-3);
    }
  }
}

TEST_CASE("elementwise relu and broadcasting") {
  TensorF r = relu(TensorF::from_vector({-1, 0, 2}));
  CHECK(r.m()(0, 0) == 0.0f);
  CHECK(r.m()(0, 1) == 0.0f);
  CHECK(r.m()(0, 2) == 2.0f);

  TensorF m = TensorF::from_flat({2, 3}, {1, 2, 3, 4, 5, 6});
  TensorF b = TensorF::from_vector({10, 20, 30});
  TensorF s = add(m, b);
  CHECK(s.m()(0, 0) == 11.0f);
  CHECK(s.m()(1, 2) == 36.0f);

  TensorF p = mul(m, TensorF::scalar(2.0f));
  CHECK(p.m()(1, 1) == 10.0f);

  CHECK_THROWS_AS(add(TensorF::zeros({2, 3}), TensorF::zeros({2, 2})),
                  DimensionError);
  CHECK_THROWS_AS(mul(TensorF::zeros({2, 3}), TensorF::zeros({4})),
                  DimensionError);
}

TEST_CASE("dropout degenerate and statistical behavior") {
  TensorF x = TensorF::from_vector({1, 2, 3});
  TensorF same = dropout(x, 0.0, DropoutKey{1, 2, 3});
  CHECK(same.m() == x.m());

  TensorF ones = TensorF::constant({10000}, 1.0f);
  DropoutKey key{42, 0, 0};
  TensorF d = dropout(ones, 0.5, key);
  int survivors = 0;
  for (Index j = 0; j < 10000; ++j) {
    float v = d.m()(0, j);
    if (v != 0.0f) {
      CHECK(v == 2.0f);
      ++survivors;
    }
  }
  double frac = survivors / 10000.0;
  CHECK(frac > 0.48);
  CHECK(frac < 0.52);

  // Counter-based: same key gives the same mask, different step differs.
  TensorF d2 = dropout(ones, 0.5, key);
  CHECK(d2.m() == d.m());
  TensorF d3 = dropout(ones, 0.5, DropoutKey{42, 1, 0});
  CHECK(d3.m() != d.m());

  CHECK_THROWS_AS(dropout(x, 1.0, key), ConfigError);
}

TEST_CASE("backward analytic cases") {
  SUBCASE("sum of squares") {
    Tape<float> tape;
    TapeScope<float> scope(tape);
    TensorF x = TensorF::from_vector({1, 2, 3}, true);
    TensorF loss = sum(mul(x, x));
    tape.backward(loss);
    CHECK(x.grad()(0, 0) == doctest::Approx(2.0f));
    CHECK(x.grad()(0, 1) == doctest::Approx(4.0f));
    CHECK(x.grad()(0, 2) == doctest::Approx(6.0f));
  }

  SUBCASE("cross entropy grad is softmax minus one-hot") {
    Tape<float> tape;
    TapeScope<float> scope(tape);
    MatF z0 = random_mat<float>(1, 5, 77);
    TensorF z = TensorF::from_matrix(z0, true);
    const int target = 2;
    TensorF loss = scale(gather_rows(log_softmax(z), {target}), -1.0f);
    TensorF loss_scalar = sum(loss);
    tape.backward(loss_scalar);
    TensorF p = softmax(TensorF::from_matrix(z0), 1);
    for (Index j = 0; j < 5; ++j) {
      float expect = p.m()(0, j) - (j == target ? 1.0f : 0.0f);
      CHECK(z.grad()(0, j) == doctest::Approx(expect).epsilon(1e-5));
    }
  }

  SUBCASE("non-scalar loss is a contract error") {
    Tape<float> tape;
    TapeScope<float> scope(tape);
    TensorF x = TensorF::from_vector({1, 2}, true);
    TensorF y = mul(x, x);
    CHECK_THROWS_AS(tape.backward(y), ContractError);
  }

  SUBCASE("repeated backward accumulates; reset restores bitwise") {
    Tape<float> tape;
    TapeScope<float> scope(tape);
    TensorF x = TensorF::from_vector({1.5f, -2.0f}, true);
    TensorF loss = sum(mul(x, x));
    tape.backward(loss);
    MatF g1 = x.grad();
    tape.backward(loss);
    CHECK(x.grad() == MatF(2.0f * g1));
    tape.zero_grads();
    tape.backward(loss);
    CHECK(x.grad() == g1);
  }

  SUBCASE("diamond graph visits each op once") {
    Tape<float> tape;
    TapeScope<float> scope(tape);
    TensorF x = TensorF::scalar(3.0f, true);
    TensorF y = TensorF::scalar(5.0f, true);
    TensorF z = add(mul(x, y), x);
    tape.backward(z);
    CHECK(x.grad()(0, 0) == doctest::Approx(6.0f));  // y + 1
    CHECK(y.grad()(0, 0) == doctest::Approx(3.0f));  // x
  }
}

TEST_CASE("gather, embed, concat, reductions") {
  TensorF a = TensorF::from_flat({2, 3}, {1, 2, 3, 4, 5, 6});
  TensorF g = gather_rows(a, {2, 0});
  CHECK(g.m()(0, 0) == 3.0f);
  CHECK(g.m()(0, 1) == 4.0f);
  CHECK_THROWS_AS(gather_rows(a, {3, 0}), ContractError);
  CHECK_THROWS_AS(gather_rows(a, {0}), ContractError);

  TensorF e = embed_rows(a, {1, 1, 0});
  CHECK(e.rows() == 3);
  CHECK(e.m()(0, 0) == 4.0f);
  CHECK(e.m()(2, 2) == 3.0f);

  TensorF cat = concat_cols<float>({a, a});
  CHECK(cat.cols() == 6);
  CHECK(cat.m()(1, 5) == 6.0f);

  TensorF rs = sum_axis(a, 1);
  CHECK(rs.m()(0, 0) == 6.0f);
  CHECK(rs.m()(0, 1) == 15.0f);
  TensorF cs = sum_axis(a, 0);
  CHECK(cs.m()(0, 2) == 9.0f);
}

TEST_CASE("grad_check contract") {
  SUBCASE("constant gradient of sum") {
    std::vector<TensorD> inputs = {
        TensorD::from_matrix(random_mat<double>(2, 3, 5), true)};
    auto f = [](const std::vector<TensorD>& in) { return sum(in[0]); };
    CHECK(grad_check<double>(f, inputs, 1e-5) < 1e-6);
  }

  SUBCASE("matmul in 64-bit accumulation") {
    MatD w = random_mat<double>(4, 3, 9);
    std::vector<TensorD> inputs = {
        TensorD::from_matrix(random_mat<double>(2, 4, 6), true)};
    auto f = [&w](const std::vector<TensorD>& in) {
      return sum(matmul(in[0], TensorD::from_matrix(w)));
    };
    CHECK(grad_check<double>(f, inputs, 1e-5) < 1e-4);
  }

  SUBCASE("softmax at large logits stays accurate") {
    MatD x = random_mat<double>(2, 4, 15, -300.0, 300.0);
    std::vector<TensorD> inputs = {TensorD::from_matrix(x, true)};
    MatD wts = random_mat<double>(2, 4, 16);
    auto f = [&wts](const std::vector<TensorD>& in) {
      return sum(mul(softmax(in[0], 1), TensorD::from_matrix(wts)));
    };
    CHECK(grad_check<double>(f, inputs, 1e-4) < 1e-3);
  }

  SUBCASE("stochastic function is rejected") {
    std::vector<TensorF> inputs = {TensorF::constant({8}, 1.0f)};
    inputs[0] = TensorF::from_matrix(inputs[0].m(), true);
    uint64_t call_count = 0;
    auto f = [&call_count](const std::vector<TensorF>& in) {
      return sum(dropout(in[0], 0.5, DropoutKey{0, call_count++, 0}));
    };
    CHECK_THROWS_AS(grad_check<float>(f, inputs, 1e-3f), ContractError);
  }
}

// One shallow probe per differentiable op, 32-bit, ten seeds each.
// Weighted sums make otherwise gradient-free reductions informative.
TEST_CASE("every differentiable op passes grad_check across seeds") {
  auto check = [](uint64_t seed, auto&& build, std::vector<TensorF> inputs) {
    auto f = [&build](const std::vector<TensorF>& in) { return build(in); };
    float err = grad_check<float>(f, inputs, 1e-2f);
    CAPTURE(seed);
    CHECK(err < 1e-3f);
  };
  for (uint64_t seed = 0; seed < 10; ++seed) {
    MatF w34 = random_mat<float>(3, 4, 900 + seed);
    MatF w38 = random_mat<float>(3, 8, 910 + seed);
    MatF w13 = random_mat<float>(1, 3, 920 + seed);

    check(seed,
          [](const std::vector<TensorF>& in) {
            return sum(matmul(in[0], in[1]));
          },
          {TensorF::from_matrix(random_mat<float>(3, 4, seed * 7 + 1), true),
           TensorF::from_matrix(random_mat<float>(4, 2, seed * 7 + 2), true)});
    check(seed,
          [](const std::vector<TensorF>& in) { return sum(add(in[0], in[1])); },
          {TensorF::from_matrix(random_mat<float>(3, 4, seed * 7 + 3), true),
           TensorF::row_vector(random_mat<float>(1, 4, seed * 7 + 4), true)});
    check(seed,
          [](const std::vector<TensorF>& in) { return sum(mul(in[0], in[1])); },
          {TensorF::from_matrix(random_mat<float>(3, 4, seed * 7 + 5), true),
           TensorF::from_matrix(random_mat<float>(3, 4, seed * 7 + 6), true)});
    check(seed,
          [](const std::vector<TensorF>& in) {
            return sum(sub(scale(in[0], 0.7f), in[1]));
          },
          {TensorF::from_matrix(random_mat<float>(2, 3, seed * 7 + 8), true),
           TensorF::from_matrix(random_mat<float>(2, 3, seed * 7 + 9), true)});
    // Inputs bounded away from zero keep the relu kink out of the FD stencil.
    MatF pos = random_mat<float>(3, 4, seed * 7 + 10, 0.1, 1.0);
    MatF sign = random_mat<float>(3, 4, seed * 7 + 11);
    MatF away = (sign.array() < 0).select(-pos, pos);
    check(seed,
          [&w34](const std::vector<TensorF>& in) {
            return sum(mul(relu(in[0]), TensorF::from_matrix(w34)));
          },
          {TensorF::from_matrix(away, true)});
    check(seed,
          [&w34](const std::vector<TensorF>& in) {
            return sum(mul(log_clamped(in[0]), TensorF::from_matrix(w34)));
          },
          {TensorF::from_matrix(
               random_mat<float>(3, 4, seed * 7 + 12, 0.2, 2.0), true)});
    check(seed,
          [&w34](const std::vector<TensorF>& in) {
            return sum(mul(softmax(in[0], 1), TensorF::from_matrix(w34)));
          },
          {TensorF::from_matrix(random_mat<float>(3, 4, seed * 7 + 13), true)});
    check(seed,
          [&w34](const std::vector<TensorF>& in) {
            return sum(mul(softmax(in[0], 0), TensorF::from_matrix(w34)));
          },
          {TensorF::from_matrix(random_mat<float>(3, 4, seed * 7 + 14), true)});
    check(seed,
          [&w34](const std::vector<TensorF>& in) {
            return sum(mul(log_softmax(in[0]), TensorF::from_matrix(w34)));
          },
          {TensorF::from_matrix(random_mat<float>(3, 4, seed * 7 + 15), true)});
    check(seed,
          [](const std::vector<TensorF>& in) {
            return sum(gather_rows(in[0], {2, 0, 1}));
          },
          {TensorF::from_matrix(random_mat<float>(3, 4, seed * 7 + 16), true)});
    check(seed,
          [&w34](const std::vector<TensorF>& in) {
            return sum(mul(embed_rows(in[0], {1, 1, 0}),
                           TensorF::from_matrix(w34)));
          },
          {TensorF::from_matrix(random_mat<float>(2, 4, seed * 7 + 17), true)});
    check(seed,
          [&w38](const std::vector<TensorF>& in) {
            return sum(mul(concat_cols<float>({in[0], in[1]}),
                           TensorF::from_matrix(w38)));
          },
          {TensorF::from_matrix(random_mat<float>(3, 4, seed * 7 + 18), true),
           TensorF::from_matrix(random_mat<float>(3, 4, seed * 7 + 19), true)});
    check(seed,
          [&w13](const std::vector<TensorF>& in) {
            return sum(mul(sum_axis(in[0], 1), TensorF::from_matrix(w13)));
          },
          {TensorF::from_matrix(random_mat<float>(3, 4, seed * 7 + 20), true)});
    check(seed,
          [](const std::vector<TensorF>& in) {
            return sum(dropout(in[0], 0.3, DropoutKey{5, 0, 0}));
          },
          {TensorF::from_matrix(random_mat<float>(3, 4, seed * 7 + 21), true)});
  }
}

// Deep composition in 64-bit accumulation mode, where FD noise is negligible.
TEST_CASE("composed graph of all ops passes grad_check in 64-bit mode") {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    std::vector<TensorD> inputs = {
        TensorD::from_matrix(random_mat<double>(3, 4, seed * 3 + 1), true),
        TensorD::from_matrix(random_mat<double>(4, 4, seed * 3 + 2), true),
        TensorD::from_matrix(
            random_mat<double>(3, 4, seed * 3 + 3, 0.1, 2.0), true)};
    auto f = [seed](const std::vector<TensorD>& in) {
      TensorD h = matmul(in[0], in[1]);
      h = relu(h);
      h = add(h, in[0]);
      h = mul(h, in[0]);
      h = dropout(h, 0.3, DropoutKey{seed, 0, 0});
      TensorD lg = log_clamped(in[2]);
      TensorD sm = softmax(h, 1);
      TensorD cat = concat_cols<double>({sm, lg});
      TensorD rows = sum_axis(cat, 1);
      TensorD picked = gather_rows(log_softmax(h), {0, 1, 2});
      return add(add(sum(rows), sum(picked)), scale(sum(in[1]), 0.5));
    };
    CHECK(grad_check<double>(f, inputs, 1e-5) < 1e-3);
  }
}

TEST_CASE("forward results stay finite on finite input") {
  for (uint64_t seed = 0; seed < 5; ++seed) {
    MatF a = random_mat<float>(4, 4, seed, -100.0, 100.0);
    MatF b = random_mat<float>(4, 4, seed + 50, -100.0, 100.0);
    TensorF ta = TensorF::from_matrix(a), tb = TensorF::from_matrix(b);
    CHECK(matmul(ta, tb).all_finite());
    CHECK(softmax(ta, 1).all_finite());
    CHECK(log_softmax(ta).all_finite());
    CHECK(relu(add(ta, tb)).all_finite());
    CHECK(log_clamped(mul(ta, ta)).all_finite());
  }
}
