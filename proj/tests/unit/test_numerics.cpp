#include "doctest.h"

#include <cmath>
#include <sstream>

#include "daf/numerics/checkpoint.hpp"
#include "daf/numerics/ops.hpp"
#include "daf/numerics/optimizer.hpp"
#include "support/gradcheck.hpp"

using namespace daf;
using namespace daf::num;

namespace {

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.begin()->size()));
  Index r = 0;
  for (const auto& row : rows) {
    Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

Parameter& scalar_param(ParamStore& store, const std::string& name, double v) {
  auto& p = store.add(name, {1, 1});
  p.value.matrix()(0, 0) = v;
  return p;
}

}  // namespace

TEST_CASE("NumArray keeps shape and row-major order") {
  const std::vector<double> data{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
  auto a = NumArray::from_row_major({2, 3, 2}, data);
  CHECK(a.matrix().rows() == 2);
  CHECK(a.matrix().cols() == 6);
  CHECK(a.matrix()(1, 0) == 7);
  CHECK(a.to_row_major() == data);
  CHECK_THROWS_AS(NumArray::from_row_major({2, 2}, data), DimensionError);
  CHECK_THROWS_AS(NumArray(Shape{0, 3}), DimensionError);
}

TEST_CASE("matmul examples") {
  Tape tape;
  auto r = matmul(tape.constant(mat({{1, 0}, {0, 1}})), tape.constant(mat({{3}, {4}})));
  CHECK(r.value() == mat({{3}, {4}}));
  CHECK(matmul(tape.constant(mat({{1, 2}})), tape.constant(mat({{3}, {4}}))).value()(0, 0) == 11);
  auto a = tape.constant(Matrix::Zero(2, 3));
  CHECK_THROWS_AS(matmul(a, a), DimensionError);
}

TEST_CASE("conv1d examples") {
  Tape tape;
  auto x = tape.constant(mat({{1, 2, 3}}));
  auto zero_bias = tape.constant(Matrix::Zero(1, 1));
  CHECK(conv1d(x, tape.constant(mat({{0, 1, 0}})), zero_bias, 3, 3).value() == mat({{1, 2, 3}}));
  CHECK(conv1d(x, tape.constant(mat({{1, 1, 1}})), zero_bias, 3, 3).value() == mat({{3, 6, 5}}));
  auto b = conv1d(tape.constant(Matrix::Zero(1, 3)), tape.constant(mat({{0.3, -2, 7}})),
                  tape.constant(mat({{1.5}})), 3, 3);
  CHECK(b.value() == mat({{1.5, 1.5, 1.5}}));
  CHECK_THROWS_AS(conv1d(x, tape.constant(mat({{1, 1}})), zero_bias, 2, 3), ConfigError);
}

TEST_CASE("conv1d pads each segment separately") {
  Tape tape;
  auto x = tape.constant(mat({{1, 2, 3, 10, 20, 30}}));
  auto y = conv1d(x, tape.constant(mat({{1, 1, 1}})), tape.constant(Matrix::Zero(1, 1)), 3, 3);
  CHECK(y.value() == mat({{3, 6, 5, 30, 60, 50}}));
}

TEST_CASE("mlp_forward examples") {
  Tape tape;
  auto x = tape.constant(mat({{1, -2}, {3, 4}}));
  std::vector<AffineLayer> identity{{tape.constant(Matrix::Identity(2, 2)), tape.constant(Matrix::Zero(2, 1))}};
  CHECK(mlp_forward(x, identity).value() == x.value());
  std::vector<AffineLayer> constant{{tape.constant(Matrix::Zero(2, 2)), tape.constant(mat({{7}, {-1}}))}};
  CHECK(mlp_forward(x, constant).value() == mat({{7, 7}, {-1, -1}}));
  // relu(2*3 - 1) = 5, then 0.5*5 + 1 = 3.5; and relu(2*(-1) - 1) = 0 gives 1.
  std::vector<AffineLayer> two{{tape.constant(mat({{2}})), tape.constant(mat({{-1}}))},
                               {tape.constant(mat({{0.5}})), tape.constant(mat({{1}}))}};
  CHECK(mlp_forward(tape.constant(mat({{3}})), two).value()(0, 0) == doctest::Approx(3.5).epsilon(1e-15));
  CHECK(mlp_forward(tape.constant(mat({{-1}})), two).value()(0, 0) == 1.0);
  std::vector<AffineLayer> broken{{tape.constant(Matrix::Zero(3, 2)), tape.constant(Matrix::Zero(3, 1))},
                                  {tape.constant(Matrix::Zero(1, 2)), tape.constant(Matrix::Zero(1, 1))}};
  CHECK_THROWS_AS(mlp_forward(x, broken), ConfigError);
}

TEST_CASE("backward examples") {
  ParamStore store;
  auto& p = store.add("p", {2, 1});
  p.value.matrix() << 1, -2;
  {
    Tape tape;
    tape.backward(sum(tape.parameter(p)));
    CHECK(p.grad.matrix() == Matrix::Ones(2, 1));
  }
  p.zero_grad();
  {
    Tape tape;
    tape.backward(sum(square(tape.parameter(p))));
    CHECK(p.grad.matrix() == mat({{2}, {-4}}));
  }
  Tape tape;
  CHECK_THROWS_AS(tape.backward(square(tape.parameter(p))), ContractError);
}

TEST_CASE("backward of a sum of losses is the sum of gradients") {
  Rng rng(5);
  ParamStore store;
  auto& p = store.add("p", {3, 2});
  p.value.matrix() = testing::uniform(rng, 3, 2);
  const Matrix w = testing::uniform(rng, 2, 4);
  auto f = [&](Tape& t) { return mean(sigmoid(matmul(t.parameter(p), t.constant(w)))); };
  auto g = [&](Tape& t) { return sum(square(t.parameter(p))); };
  Matrix separate = Matrix::Zero(3, 2);
  for (int which = 0; which < 2; ++which) {
    Tape t;
    t.backward(which == 0 ? f(t) : g(t));
    separate += p.grad.matrix();
    p.zero_grad();
  }
  Tape t;
  t.backward(add(f(t), g(t)));
  CHECK((p.grad.matrix() - separate).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("every op matches central finite differences") {
  Rng rng(2024);
  for (const auto& op : testing::op_catalogue()) {
    CAPTURE(op.name);
    double worst = 0.0;
    for (int i = 0; i < 10; ++i) worst = std::max(worst, testing::gradient_error(op.make(rng), rng));
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("log_clamped has zero gradient where the clamp is active") {
  ParamStore store;
  auto& p = store.add("p", {1, 2});
  p.value.matrix() << 0.0, 2.0;
  Tape tape;
  auto y = log_clamped(tape.parameter(p), 1e-7, 1.0 - 1e-7);
  CHECK(y.value()(0, 0) == doctest::Approx(std::log(1e-7)));
  tape.backward(sum(y));
  CHECK(p.grad.matrix() == Matrix::Zero(1, 2));
}

TEST_CASE("softmax is shift invariant and safe for large scores") {
  Vector s(3);
  s << 1000.0, 1001.0, 999.0;
  const Vector p = softmax(s);
  CHECK(p.allFinite());
  CHECK(std::abs(p.sum() - 1.0) < 1e-15);
  Vector t = s.array() - 1000.0;
  CHECK((softmax(t) - p).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("self-excluding attention never weighs a position on itself") {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const Index d = testing::pick(rng, 1, 4), L = testing::pick(rng, 2, 9), B = testing::pick(rng, 1, 3);
    Tape tape(false);
    std::vector<Matrix> w;
    self_excluding_attention(tape.constant(testing::uniform(rng, d, B * L, -3, 3)),
                             tape.constant(testing::uniform(rng, d, B * L, -3, 3)),
                             tape.constant(testing::uniform(rng, 2, B * L)), L, &w);
    REQUIRE(w.size() == static_cast<std::size_t>(B));
    for (const auto& m : w) {
      CHECK(m.diagonal().cwiseAbs().maxCoeff() == 0.0);
      CHECK((m.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
      CHECK(m.minCoeff() >= 0.0);
    }
  }
}

TEST_CASE("Adam step examples") {
  ParamStore store;
  auto& p = scalar_param(store, "p", 1.0);
  std::vector<Parameter*> ps{&p};
  Adam adam({.learning_rate = 0.1});
  p.has_grad = true;  // zero gradient from a backward pass that did not touch p
  adam.step(ps);
  CHECK(p.value.matrix()(0, 0) == 1.0);
  CHECK(adam.steps() == 1);

  {
    Tape tape;
    tape.backward(sum(tape.parameter(p)));
  }
  adam.step(ps);
  CHECK(p.value.matrix()(0, 0) < 1.0);
  CHECK(adam.steps() == 2);
  CHECK(p.grad.matrix()(0, 0) == 0.0);

  auto& q = scalar_param(store, "q", 0.0);
  std::vector<Parameter*> qs{&q};
  Adam up({.learning_rate = 0.1});
  {
    Tape tape;
    tape.backward(sum(tape.parameter(q)));
  }
  up.step(qs, Direction::ascend);
  CHECK(q.value.matrix()(0, 0) > 0.0);

  CHECK_THROWS_AS(up.step(qs), ContractError);
  CHECK_THROWS_AS(Adam({.learning_rate = 0.0}), ConfigError);
}

TEST_CASE("Adam moments survive a deep copy of the store") {
  ParamStore store;
  auto& p = scalar_param(store, "p", 0.5);
  Adam adam;
  for (int i = 0; i < 3; ++i) {
    Tape tape;
    tape.backward(sum(square(tape.parameter(p))));
    std::vector<Parameter*> ps{&p};
    adam.step(ps);
  }
  ParamStore copy = store;
  Adam adam_copy = adam;
  for (auto* s : {&store, &copy}) {
    auto& x = s->at("p");
    Tape tape;
    tape.backward(sum(square(tape.parameter(x))));
  }
  std::vector<Parameter*> a{&store.at("p")}, b{&copy.at("p")};
  adam.step(a);
  adam_copy.step(b);
  CHECK(store.same_values(copy));
}

TEST_CASE("identical seeds and op sequences give bit-identical results") {
  auto run = [] {
    Rng rng(77);
    Tape tape;
    auto x = tape.constant(testing::uniform(rng, 3, 8));
    auto k = tape.constant(testing::uniform(rng, 2, 9));
    auto y = conv1d(x, k, tape.constant(testing::uniform(rng, 2, 1)), 3, 4);
    return self_excluding_attention(y, y, x, 4).value();
  };
  CHECK(run() == run());
}

TEST_CASE("checkpoint round trip is bit exact") {
  Rng rng(3);
  ParamStore store;
  store.add("a.weight", {3, 2}).value.matrix() = testing::uniform(rng, 3, 2, -1e3, 1e3);
  store.add("a.kernel", {2, 3, 5}).value.matrix() = testing::uniform(rng, 2, 15);
  store.add("b", {4}).value.matrix() = testing::uniform(rng, 4, 1);
  store.at("b").value.matrix()(0, 0) = 1.0 / 3.0;
  std::stringstream buf;
  write_checkpoint(buf, store, {{"note", "x"}});
  const auto ck = read_checkpoint(buf);
  CHECK(ck.params.names() == store.names());
  for (const auto& name : store.names()) CHECK(ck.params.at(name).value == store.at(name).value);
  CHECK(ck.metadata["note"] == "x");

  ParamStore target;
  target.add("a.weight", {3, 2});
  target.add("a.kernel", {2, 3, 5});
  target.add("b", {4});
  restore_into(target, ck.params);
  CHECK(target.same_values(store));

  ParamStore wrong;
  wrong.add("a.weight", {2, 3});
  CHECK_THROWS_AS(restore_into(wrong, ck.params), StateMismatchError);

  std::stringstream junk("not a checkpoint");
  CHECK_THROWS_AS(read_checkpoint(junk), StateMismatchError);
}
