#include "lclip/autodiff.hpp"

#include <gtest/gtest.h>

#include "lclip/gradcheck.hpp"
#include "lclip/param.hpp"
#include "lclip/rng.hpp"

using namespace lclip;

namespace {

// Every differentiable op, audited against central differences on random
// small tensors in both precisions. The reductions are weighted so no op sees
// a structurally constant loss (sum of a softmax row is always 1).
template <class T>
void per_op_gradients(T eps, double tol) {
  Rng rng(17);
  ParamT<T> a("a", TensorT<T>::normal(Shape{3, 4}, rng, 1.0));
  ParamT<T> b("b", TensorT<T>::normal(Shape{3, 4}, rng, 1.0));
  ParamT<T> w("w", TensorT<T>::normal(Shape{4, 2}, rng, 1.0));
  ParamT<T> v1("v1", TensorT<T>::normal(Shape{6}, rng, 1.0));
  ParamT<T> v2("v2", TensorT<T>::normal(Shape{6}, rng, 1.0));
  ParamT<T> gam("gam", TensorT<T>::normal(Shape{4}, rng, 0.3));
  ParamT<T> bet("bet", TensorT<T>::normal(Shape{4}, rng, 0.3));
  ParamT<T> sc("sc", TensorT<T>::normal(Shape{}, rng, 1.0));
  Rng wr(101);
  TensorT<T> wts34 = TensorT<T>::normal(Shape{3, 4}, wr, 1.0);
  TensorT<T> wts43 = TensorT<T>::normal(Shape{4, 3}, wr, 1.0);
  TensorT<T> wts32 = TensorT<T>::normal(Shape{3, 2}, wr, 1.0);
  TensorT<T> wts6 = TensorT<T>::normal(Shape{6}, wr, 1.0);

  auto chk = [&](const char* name, std::function<ad::Var<T>(Graph<T>&)> f,
                 std::vector<ParamT<T>*> ps) {
    GradCheckReport rep;
    const double err = finite_diff_check<T>(f, ps, eps, &rep);
    EXPECT_LE(err, tol) << name << " worst coordinate " << rep.worst_param << "["
                        << rep.worst_index << "] analytic=" << rep.worst_analytic
                        << " numeric=" << rep.worst_numeric;
  };

  chk("add/sub/mul", [&](Graph<T>& g) {
    return ad::sum(ad::mul(ad::add(g.param(a), g.param(b)), ad::sub(g.param(a), g.param(b))));
  }, {&a, &b});
  chk("matmul", [&](Graph<T>& g) {
    return ad::sum(ad::mul(ad::matmul(g.param(a), g.param(w)), g.constant(wts32)));
  }, {&a, &w});
  chk("gelu", [&](Graph<T>& g) { return ad::sum(ad::gelu(g.param(a))); }, {&a});
  chk("relu", [&](Graph<T>& g) { return ad::sum(ad::relu(g.param(a))); }, {&a});
  chk("softmax+transpose", [&](Graph<T>& g) {
    return ad::sum(ad::mul(ad::softmax_rows(ad::transpose(g.param(a))), g.constant(wts43)));
  }, {&a});
  chk("log_softmax", [&](Graph<T>& g) {
    return ad::sum(ad::mul(ad::log_softmax_rows(g.param(a)), g.constant(wts34)));
  }, {&a});
  chk("layer_norm", [&](Graph<T>& g) {
    auto gv = ad::add(g.param(gam), g.constant(TensorT<T>::full(Shape{4}, T(1.5))));
    return ad::sum(ad::mul(ad::layer_norm_rows(g.param(a), gv, g.param(bet)), g.constant(wts34)));
  }, {&a, &gam, &bet});
  chk("rms_norm", [&](Graph<T>& g) {
    auto gv = ad::add(g.param(gam), g.constant(TensorT<T>::full(Shape{4}, T(1.5))));
    return ad::sum(ad::mul(ad::rms_norm_rows(g.param(a), gv, g.param(bet)), g.constant(wts34)));
  }, {&a, &gam, &bet});
  chk("cosine", [&](Graph<T>& g) { return ad::cosine(g.param(v1), g.param(v2)); }, {&v1, &v2});
  chk("l2_normalize", [&](Graph<T>& g) {
    return ad::sum(ad::mul(ad::l2_normalize(g.param(v1)), g.constant(wts6)));
  }, {&v1});
  chk("mae", [&](Graph<T>& g) { return ad::mae(g.param(v1), g.param(v2)); }, {&v1, &v2});
  chk("dot", [&](Graph<T>& g) { return ad::dot(g.param(v1), g.param(v2)); }, {&v1, &v2});
  chk("affine_scalar", [&](Graph<T>& g) {
    auto z = g.constant(TensorT<T>::scalar(T(0.5)));
    return ad::sum(ad::mul(ad::affine_scalar(g.param(a), g.param(sc), z), g.constant(wts34)));
  }, {&a, &sc});
  chk("slice/concat_cols", [&](Graph<T>& g) {
    auto x = g.param(a);
    auto parts = std::vector<ad::Var<T>>{ad::slice_cols(x, 0, 2), ad::slice_cols(x, 2, 4)};
    return ad::sum(ad::mul(ad::concat_cols(parts), g.constant(wts34)));
  }, {&a});
  chk("row_vec/stack_rows", [&](Graph<T>& g) {
    auto x = g.param(a);
    std::vector<ad::Var<T>> rows;
    for (std::size_t i = 0; i < 3; ++i) rows.push_back(ad::l2_normalize(ad::row_vec(x, i)));
    return ad::sum(ad::mul(ad::stack_rows(rows), g.constant(wts34)));
  }, {&a});
  chk("gather_rows", [&](Graph<T>& g) {
    return ad::sum(ad::mul(ad::gather_rows(g.param(a), {2, 0, 2}), g.constant(wts34)));
  }, {&a});
  chk("gather_per_row", [&](Graph<T>& g) {
    return ad::sum(ad::gather_per_row(ad::log_softmax_rows(g.param(a)), {1, 3, 0}));
  }, {&a});
  chk("add_row_broadcast", [&](Graph<T>& g) {
    return ad::sum(ad::mul(ad::add_row_broadcast(g.param(a), g.param(gam)), g.constant(wts34)));
  }, {&a, &gam});
  chk("slice_rows", [&](Graph<T>& g) {
    return ad::sum(ad::mul(ad::slice_rows(g.param(a), 1, 3),
                           ad::slice_rows(g.constant(wts34), 0, 2)));
  }, {&a});
}

}  // namespace

TEST(GradCheck, LinearLossIsExact) {
  Rng rng(1);
  ParamT<double> p("x", Tensor::normal(Shape{5}, rng, 1.0));
  const double err = finite_diff_check<double>(
      [&](Graph<double>& g) { return ad::sum(g.param(p)); }, {&p}, 1e-3);
  EXPECT_LE(err, 1e-9);
}

TEST(GradCheck, QuadraticLoss) {
  ParamT<double> p("x", Tensor(Shape{2}, {1, 2}));
  const double err = finite_diff_check<double>(
      [&](Graph<double>& g) {
        auto x = g.param(p);
        return ad::sum(ad::mul(x, x));
      },
      {&p}, 1e-3);
  EXPECT_LE(err, 1e-6);
}

TEST(GradCheck, DetectsWrongGradient) {
  // A deliberately broken op: value of sum(x) but gradient scaled by 2.
  ParamT<double> p("x", Tensor(Shape{3}, {0.5, -1.25, 2.0}));
  auto broken_sum = [](const ad::Var<double>& a) {
    double s = 0;
    for (std::size_t i = 0; i < a->value.numel(); ++i) s += a->value[i];
    return ad::detail::make_op<double>(Tensor::scalar(s), {a}, [](ad::Node<double>& n) {
      auto& g = ad::detail::pgrad(n, 0);
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += 2.0 * n.grad[0];
    });
  };
  const double err = finite_diff_check<double>(
      [&](Graph<double>& g) { return broken_sum(g.param(p)); }, {&p}, 1e-5);
  EXPECT_NEAR(err, 0.5, 1e-5);
}

TEST(GradCheck, NonDeterministicLossIsAnError) {
  Rng rng(9);
  ParamT<double> p("x", Tensor::normal(Shape{2}, rng, 1.0));
  int calls = 0;
  EXPECT_THROW(
      finite_diff_check<double>(
          [&](Graph<double>& g) {
            auto noise = Tensor::scalar(0.01 * ++calls);
            return ad::add(ad::sum(g.param(p)), g.constant(noise));
          },
          {&p}, 1e-5),
      DeterminismError);
}

TEST(GradCheck, FrozenParamsAreSkippedAndStayZero) {
  Rng rng(2);
  ParamT<double> a("a", Tensor::normal(Shape{3}, rng, 1.0));
  ParamT<double> b("b", Tensor::normal(Shape{3}, rng, 1.0));
  b.frozen = true;
  finite_diff_check<double>(
      [&](Graph<double>& g) { return ad::sum(ad::mul(g.param(a), g.param(b))); },
      {&a, &b}, 1e-5);
  for (std::size_t i = 0; i < b.grad.numel(); ++i) EXPECT_EQ(b.grad[i], 0.0);
}

TEST(Autodiff, PerOpGradientsDouble) { per_op_gradients<double>(1e-5, 1e-6); }

TEST(Autodiff, PerOpGradientsSingle) { per_op_gradients<float>(1e-2f, 1e-3); }

TEST(Autodiff, CompositeGraphSanity) {
  // Multi-op compositions with sharp softmax weightings; looser bound than the
  // per-op audit because truncation error compounds.
  Rng rng(23);
  for (int iter = 0; iter < 10; ++iter) {
    const std::size_t m = 2 + rng.uniform_index(6), k = 2 + rng.uniform_index(6),
                      n = 2 + rng.uniform_index(6);
    ParamT<double> x("x", Tensor::normal(Shape{m, k}, rng, 1.0));
    ParamT<double> w("w", Tensor::normal(Shape{k, n}, rng, 1.0));
    ParamT<double> g1("g1", Tensor::normal(Shape{n}, rng, 0.2));
    ParamT<double> b1("b1", Tensor::normal(Shape{n}, rng, 0.2));
    Tensor weights = Tensor::normal(Shape{m, n}, rng, 1.0);
    const double err = finite_diff_check<double>(
        [&](Graph<double>& g) {
          auto gamv = ad::add(g.param(g1), g.constant(Tensor::full(Shape{n}, 1.0)));
          auto h = ad::layer_norm_rows(ad::gelu(ad::matmul(g.param(x), g.param(w))), gamv,
                                       g.param(b1));
          return ad::mean(ad::mul(ad::softmax_rows(h), g.constant(weights)));
        },
        {&x, &w, &g1, &b1}, 1e-5);
    EXPECT_LE(err, 1e-3);
  }
}

TEST(Autodiff, DiamondGraphAccumulates) {
  ParamT<double> p("x", Tensor(Shape{2}, {3, 5}));
  Graph<double> g;
  auto x = g.param(p);
  auto y = ad::add(ad::mul(x, x), x);  // x used twice on one path, once on other
  auto loss = ad::sum(y);
  g.backward(loss);
  EXPECT_DOUBLE_EQ(p.grad[0], 2 * 3 + 1);
  EXPECT_DOUBLE_EQ(p.grad[1], 2 * 5 + 1);
}

TEST(Autodiff, ConstantsBuildNoTape) {
  auto c = ad::constant(Tensor(Shape{2, 2}, {1, 2, 3, 4}));
  auto y = ad::matmul(c, c);
  EXPECT_FALSE(y->requires_grad);
  EXPECT_TRUE(y->parents.empty());
}

TEST(Autodiff, FiniteOutputsOnFiniteInputs) {
  Rng rng(41);
  for (int iter = 0; iter < 20; ++iter) {
    auto x = ad::constant(Tensor::normal(Shape{4, 4}, rng, 25.0));
    EXPECT_TRUE(ad::softmax_rows(x)->value.all_finite());
    EXPECT_TRUE(ad::log_softmax_rows(x)->value.all_finite());
    EXPECT_TRUE(ad::gelu(x)->value.all_finite());
  }
}

TEST(Adam, ZeroLearningRateLeavesParamsBitIdentical) {
  Rng rng(31);
  ParamT<double> p("p", Tensor::normal(Shape{4}, rng, 1.0));
  const Tensor before = p.value;
  Adam<double> opt({.lr = 0.0});
  zero_grads<double>({&p});
  Graph<double> g;
  g.backward(ad::sum(ad::mul(g.param(p), g.param(p))));
  opt.step({&p});
  EXPECT_EQ(p.value, before);
}

TEST(Adam, FrozenParamUntouched) {
  Rng rng(37);
  ParamT<double> p("p", Tensor::normal(Shape{4}, rng, 1.0));
  ParamT<double> q("q", Tensor::normal(Shape{4}, rng, 1.0));
  q.frozen = true;
  const Tensor q_before = q.value;
  Adam<double> opt({.lr = 0.05});
  for (int step = 0; step < 3; ++step) {
    zero_grads<double>({&p, &q});
    Graph<double> g;
    g.backward(ad::sum(ad::mul(ad::add(g.param(p), g.param(q)), g.param(p))));
    opt.step({&p, &q});
  }
  EXPECT_EQ(q.value, q_before);
}
