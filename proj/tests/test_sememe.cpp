#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "lexfusion/ops.hpp"
#include "lexfusion/sememe_encoder.hpp"

using namespace lexfusion;

namespace {

SememeEncoderConfig small_config() {
  SememeEncoderConfig c;
  c.sememe_dim = 5;
  c.heads = 3;
  c.head_dim = 2;
  c.offset_dim = 3;
  c.input_dim = 4;
  c.output_dim = 3;
  return c;
}

// Plain-loop GAT: per head, LeakyReLU(a_s.Wh_i + a_t.Wh_j) over neighbours j
// of i, softmax, weighted sum of Wh_j; heads side by side.
struct DenseGat {
  Tensor nodes;
  std::vector<Tensor> attention;
};

DenseGat dense_gat(const SememeEncoder& enc, const Tensor& x, const Tensor& adj) {
  const std::size_t m = x.rows();
  const std::size_t in = x.cols();
  const std::size_t heads = enc.head_weight.size();
  const std::size_t hd = enc.head_weight[0].value.cols();
  DenseGat out{Tensor({m, heads * hd}), {}};
  for (std::size_t k = 0; k < heads; ++k) {
    const Tensor& w = enc.head_weight[k].value;
    Tensor wh({m, hd});
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t d = 0; d < hd; ++d)
        for (std::size_t c = 0; c < in; ++c) wh.at(i, d) += x.at(i, c) * w.at(c, d);
    Tensor alpha({m, m});
    for (std::size_t i = 0; i < m; ++i) {
      double total = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        if (adj.at(i, j) == 0.0) continue;
        double e = 0.0;
        for (std::size_t d = 0; d < hd; ++d) {
          e += enc.head_source[k].value[d] * wh.at(i, d) + enc.head_target[k].value[d] * wh.at(j, d);
        }
        e = e > 0 ? e : 0.2 * e;
        alpha.at(i, j) = std::exp(e);
        total += alpha.at(i, j);
      }
      for (std::size_t j = 0; j < m; ++j) alpha.at(i, j) /= total;
      for (std::size_t j = 0; j < m; ++j)
        for (std::size_t d = 0; d < hd; ++d) out.nodes.at(i, k * hd + d) += alpha.at(i, j) * wh.at(j, d);
    }
    out.attention.push_back(alpha);
  }
  return out;
}

Tensor random_adjacency(std::size_t m, Rng& rng) {
  Tensor adj({m, m});
  for (std::size_t i = 0; i < m; ++i) {
    adj.at(i, i) = 1.0;
    for (std::size_t j = 0; j < i; ++j) {
      const double e = uniform01(rng) < 0.5 ? 1.0 : 0.0;
      adj.at(i, j) = adj.at(j, i) = e;
    }
  }
  return adj;
}

Tensor row(const Tensor& t, std::size_t r) {
  Tensor out({t.cols()});
  for (std::size_t c = 0; c < t.cols(); ++c) out[c] = t.at(r, c);
  return out;
}

void check_close(const Tensor& a, const Tensor& b, double tol = 1e-12) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < tol);
}

const char* kLexicon = R"({
  "sememes": ["s0", "s1", "s2", "s3"],
  "words": {
    "a": [{"sense": "a1", "sememes": [0]}],
    "b": [{"sense": "b1", "sememes": [1]}],
    "c": [{"sense": "c1", "sememes": [0, 1, 2], "edges": [[0, 1]]}],
    "ab": [{"sense": "ab1", "sememes": [2, 3]}, {"sense": "ab2", "sememes": [1]}]
  }
})";

}  // namespace

TEST_CASE("GAT: single node and symmetric pair") {
  Rng rng(1);
  SememeEncoder enc(4, small_config(), rng);
  Tape tape;
  const Tensor x = uniform_tensor({1, 5}, -1, 1, rng);
  const auto single = enc.gat_layer(tape, tape.constant(x), Tensor({1, 1}, 1.0));
  for (const Var& a : single.attention) CHECK(a.value()[0] == 1.0);
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t d = 0; d < 2; ++d) {
      double wh = 0.0;
      for (std::size_t c = 0; c < 5; ++c) wh += x.at(0, c) * enc.head_weight[k].value.at(c, d);
      CHECK(single.nodes.value().at(0, k * 2 + d) == doctest::Approx(wh).epsilon(1e-12));
    }
  }

  Tensor twin({2, 5});
  for (std::size_t c = 0; c < 5; ++c) twin.at(0, c) = twin.at(1, c) = x.at(0, c);
  const auto pair = enc.gat_layer(tape, tape.constant(twin), Tensor({2, 2}, 1.0));
  for (const Var& a : pair.attention) {
    for (double w : a.value().values()) CHECK(w == doctest::Approx(0.5).epsilon(1e-12));
  }
  CHECK_THROWS_AS(enc.gat_layer(tape, tape.constant(twin), Tensor({3, 3}, 1.0)), ShapeError);
}

TEST_CASE("GAT matches the dense oracle on random graphs up to 6 nodes") {
  Rng rng(2);
  SememeEncoder enc(4, small_config(), rng);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 1 + uniform_index(rng, 6);
    const Tensor x = uniform_tensor({m, 5}, -2, 2, rng);
    const Tensor adj = random_adjacency(m, rng);
    Tape tape;
    const auto got = enc.gat_layer(tape, tape.constant(x), adj);
    const DenseGat want = dense_gat(enc, x, adj);
    check_close(got.nodes.value(), want.nodes);
    for (std::size_t k = 0; k < 3; ++k) {
      check_close(got.attention[k].value(), want.attention[k]);
      for (std::size_t i = 0; i < m; ++i) {
        double total = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
          CHECK(got.attention[k].value().at(i, j) >= 0.0);
          if (adj.at(i, j) == 0.0) CHECK(got.attention[k].value().at(i, j) == 0.0);
          total += got.attention[k].value().at(i, j);
        }
        CHECK(std::abs(total - 1.0) < 1e-9);
      }
    }
  }
}

TEST_CASE("sense representations") {
  Rng rng(3);
  const SememeLexicon lex = SememeLexicon::parse(kLexicon);
  SememeEncoder enc(lex.sememe_count(), small_config(), rng);
  Tape tape;
  const Sense& a = lex.senses(U"a")[0];
  const Sense& c = lex.senses(U"c")[0];

  SUBCASE("one sememe: mean is the node output") {
    const Tensor emb = row(enc.sememe_embedding.value, 0);
    const Tensor x({1, 5}, std::vector<double>(emb.values().begin(), emb.values().end()));
    const DenseGat want = dense_gat(enc, x, Tensor({1, 1}, 1.0));
    check_close(enc.sense_graph_mean(tape, a).value(), want.nodes);
  }
  SUBCASE("three sememes: mean of the three node outputs") {
    Tensor x({3, 5});
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t k = 0; k < 5; ++k) x.at(i, k) = enc.sememe_embedding.value.at(c.graph.nodes[i], k);
    const DenseGat want = dense_gat(enc, x, c.graph.adjacency());
    const Tensor got = enc.sense_graph_mean(tape, c).value();
    for (std::size_t d = 0; d < 6; ++d) {
      const double mean = (want.nodes.at(0, d) + want.nodes.at(1, d) + want.nodes.at(2, d)) / 3.0;
      CHECK(got.at(0, d) == doctest::Approx(mean).epsilon(1e-12));
    }
  }
  SUBCASE("offset changes only the offset part") {
    const Tensor r00 = enc.sense_repr(tape, c, 0, 0).value();
    const Tensor r10 = enc.sense_repr(tape, c, -1, 0).value();
    CHECK(r00.cols() == enc.sense_width());
    for (std::size_t d = 0; d < enc.gat_width(); ++d) CHECK(r00.at(0, d) == r10.at(0, d));
    bool differs = false;
    for (std::size_t d = enc.gat_width(); d < enc.sense_width(); ++d) differs = differs || r00.at(0, d) != r10.at(0, d);
    CHECK(differs);
  }
  SUBCASE("offset ids are clamped") {
    CHECK(SememeEncoder::offset_id(0, 0) == 0);
    CHECK(SememeEncoder::offset_id(-1, 0) == 4);
    CHECK(SememeEncoder::offset_id(-7, 9) == SememeEncoder::offset_id(-3, 3));
    CHECK(SememeEncoder::offset_id(-3, 3) == SememeEncoder::kOffsetVocab - 1);
  }
  SUBCASE("unknown sememe id") {
    Sense bad{"bad", U"z", {{99}, {}}};
    bad.graph.normalize();
    CHECK_THROWS(enc.sense_graph_mean(tape, bad));
  }
}

TEST_CASE("sense aggregation") {
  Rng rng(4);
  SememeEncoder enc(4, small_config(), rng);
  const std::size_t sw = enc.sense_width();
  Tape tape;
  Var h = tape.constant(uniform_tensor({1, 4}, -1, 1, rng));

  const Tensor lone = uniform_tensor({1, sw}, -1, 1, rng);
  const auto one = enc.aggregate(tape, h, tape.constant(lone));
  CHECK(one.weights.value()[0] == 1.0);
  check_close(one.output.value(), lone);

  Tensor twin({2, sw});
  for (std::size_t d = 0; d < sw; ++d) twin.at(0, d) = twin.at(1, d) = lone.at(0, d);
  const auto two = enc.aggregate(tape, h, tape.constant(twin));
  CHECK(two.weights.value()[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(two.weights.value()[1] == doctest::Approx(0.5).epsilon(1e-12));

  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 6);
    const Tensor senses = uniform_tensor({n, sw}, -3, 3, rng);
    const auto agg = enc.aggregate(tape, tape.constant(uniform_tensor({1, 4}, -3, 3, rng)), tape.constant(senses));
    double total = 0.0;
    for (double w : agg.weights.value().values()) {
      CHECK(w >= 0.0);
      total += w;
    }
    CHECK(std::abs(total - 1.0) < 1e-9);
    for (std::size_t d = 0; d < sw; ++d) {
      double lo = senses.at(0, d), hi = senses.at(0, d);
      for (std::size_t j = 1; j < n; ++j) {
        lo = std::min(lo, senses.at(j, d));
        hi = std::max(hi, senses.at(j, d));
      }
      CHECK(agg.output.value().at(0, d) >= lo - 1e-12);
      CHECK(agg.output.value().at(0, d) <= hi + 1e-12);
    }
  }
}

TEST_CASE("enhance") {
  Rng rng(5);
  const SememeLexicon lex = SememeLexicon::parse(kLexicon);
  SememeEncoderConfig cfg = small_config();
  SememeEncoder enc(lex.sememe_count(), cfg, rng);
  Tape tape;

  SUBCASE("length, fallback, and composition of sense_repr + aggregate") {
    cfg.mode = SememeMode::kChar;
    SememeEncoder char_enc(lex.sememe_count(), cfg, rng);
    const Tensor base = uniform_tensor({3, 4}, -1, 1, rng);
    const Tensor out = char_enc.enhance(tape, U"axb", tape.constant(base), lex).value();
    REQUIRE(out.shape() == Shape{3, 3});

    // 'a' has one single-sememe sense: aggregate of one is the sense itself
    const Tensor repr = char_enc.sense_repr(tape, lex.senses(U"a")[0], 0, 0).value();
    for (std::size_t o = 0; o < 3; ++o) {
      double v = char_enc.output_bias.value[o];
      for (std::size_t d = 0; d < char_enc.sense_width(); ++d) v += repr.at(0, d) * char_enc.output_weight.value.at(d, o);
      CHECK(out.at(0, o) == doctest::Approx(v).epsilon(1e-12));
    }
    // 'x' has no match: fallback projection of its base row
    Tensor fallback({char_enc.sense_width()});
    for (std::size_t d = 0; d < char_enc.sense_width(); ++d) {
      fallback[d] = char_enc.fallback_bias.value[d];
      for (std::size_t k = 0; k < 4; ++k) fallback[d] += base.at(1, k) * char_enc.fallback_weight.value.at(k, d);
    }
    for (std::size_t o = 0; o < 3; ++o) {
      double v = char_enc.output_bias.value[o];
      for (std::size_t d = 0; d < char_enc.sense_width(); ++d) v += fallback[d] * char_enc.output_weight.value.at(d, o);
      CHECK(out.at(1, o) == doctest::Approx(v).epsilon(1e-12));
    }
  }
  SUBCASE("word mode sees multi-character words") {
    const Tensor base = uniform_tensor({2, 4}, -1, 1, rng);
    cfg.mode = SememeMode::kChar;
    SememeEncoder char_enc(lex.sememe_count(), cfg, rng);
    char_enc.sememe_embedding.value = enc.sememe_embedding.value;
    for (Parameter* p : char_enc.parameters()) {
      for (Parameter* q : enc.parameters()) {
        if (p->name == q->name) p->value = q->value;
      }
    }
    const Tensor word = enc.enhance(tape, U"ab", tape.constant(base), lex).value();
    const Tensor chars = char_enc.enhance(tape, U"ab", tape.constant(base), lex).value();
    CHECK_FALSE(word == chars);
  }
  SUBCASE("pseudo graphs change the output when graphs are sparse") {
    cfg.graph = GraphMode::kPseudo;
    Rng same(5);
    SememeEncoder real(lex.sememe_count(), small_config(), same);
    Rng same2(5);
    SememeEncoder pseudo(lex.sememe_count(), cfg, same2);
    const Tensor base = uniform_tensor({1, 4}, -1, 1, rng);
    const Tensor a = real.enhance(tape, U"c", tape.constant(base), lex).value();
    const Tensor b = pseudo.enhance(tape, U"c", tape.constant(base), lex).value();
    CHECK_FALSE(a == b);
    // a single-sememe sense has nothing to connect: identical
    CHECK(real.enhance(tape, U"a", tape.constant(base), lex).value() ==
          pseudo.enhance(tape, U"a", tape.constant(base), lex).value());
  }
  SUBCASE("concat mode keeps the base") {
    cfg.concat_base = true;
    SememeEncoder cat(lex.sememe_count(), cfg, rng);
    const Tensor base = uniform_tensor({2, 4}, -1, 1, rng);
    const Tensor out = cat.enhance(tape, U"ab", tape.constant(base), lex).value();
    REQUIRE(out.cols() == 7);
    for (std::size_t k = 0; k < 4; ++k) CHECK(out.at(1, k) == base.at(1, k));
  }
  SUBCASE("width mismatch") {
    CHECK_THROWS_AS(enc.enhance(tape, U"ab", tape.constant(Tensor({3, 4})), lex), ShapeError);
  }
}

TEST_CASE("sememe encoder gradients pass finite differences") {
  Rng rng(6);
  const SememeLexicon lex = SememeLexicon::parse(kLexicon);
  SememeEncoderConfig cfg = small_config();
  SememeEncoder enc(lex.sememe_count(), cfg, rng);

  SUBCASE("GAT layer, including node inputs") {
    Parameter x("x", uniform_tensor({4, 5}, -1, 1, rng));
    const Tensor adj = random_adjacency(4, rng);
    const Tensor w = uniform_tensor({4, 6}, -1, 1, rng);
    std::vector<Parameter*> ps{&x};
    for (std::size_t k = 0; k < 3; ++k) {
      ps.push_back(&enc.head_weight[k]);
      ps.push_back(&enc.head_source[k]);
      ps.push_back(&enc.head_target[k]);
    }
    auto loss = [&](Tape& t) {
      return ops::reshape(ops::sum(ops::mul(enc.gat_layer(t, t.param(x), adj).nodes, t.constant(w))), {1});
    };
    CHECK(testdata::gradient_error(ps, loss) < 1e-4);
  }
  SUBCASE("sense aggregation") {
    Parameter h("h", uniform_tensor({1, 4}, -1, 1, rng));
    Parameter senses("senses", uniform_tensor({3, enc.sense_width()}, -1, 1, rng));
    const Tensor w = uniform_tensor({1, enc.sense_width()}, -1, 1, rng);
    auto loss = [&](Tape& t) {
      return ops::reshape(ops::sum(ops::mul(enc.aggregate(t, t.param(h), t.param(senses)).output, t.constant(w))), {1});
    };
    CHECK(testdata::gradient_error({&h, &senses, &enc.attention_vector}, loss) < 1e-4);
  }
  SUBCASE("whole enhance: sememe, offset and attention parameters") {
    Parameter base("base", uniform_tensor({4, 4}, -1, 1, rng));
    const Tensor w = uniform_tensor({4, 3}, -1, 1, rng);
    auto loss = [&](Tape& t) {
      return ops::reshape(ops::sum(ops::mul(enc.enhance(t, U"abxc", t.param(base), lex), t.constant(w))), {1});
    };
    std::vector<Parameter*> ps = enc.parameters();
    ps.push_back(&base);
    CHECK(testdata::gradient_error(ps, loss) < 1e-4);
    CHECK(enc.sememe_embedding.grad.at(3, 0) != 0.0);
    CHECK(enc.attention_vector.grad[0] != 0.0);
  }
}
