#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <random>

#include "oracles.hpp"
#include "tsf/checkpoint.hpp"
#include "tsf/model.hpp"

using namespace tsf;

namespace {

using oracle::Mat;

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor(std::move(shape), std::move(v));
}

ModelSpec small_spec(ModelKind kind) {
  ModelSpec s;
  s.kind = kind;
  s.n_encoders = 2;
  s.n_decoders = 2;
  s.n_heads = 2;
  s.d_model = 8;
  s.ffn_width = 8;
  s.lstm_layers = 2;
  s.input_features = 15;
  s.output_features = 2;
  s.window = 12;
  s.horizon = 6;
  return s;
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

const Tensor& param(const Model& m, const std::string& name) {
  const auto* t = m.parameters().find(name);
  if (!t) throw std::runtime_error("missing parameter " + name);
  return *t;
}

// Plain-loop building blocks for the hand-composed reference.
Mat linear(const Mat& x, const Tensor& w, const Tensor& b) {
  const std::size_t in = w.dim(0), out = w.dim(1);
  Mat y(x.size(), std::vector<double>(out));
  for (std::size_t r = 0; r < x.size(); ++r) {
    for (std::size_t o = 0; o < out; ++o) {
      double acc = b[o];
      for (std::size_t i = 0; i < in; ++i) acc += x[r][i] * w[i * out + o];
      y[r][o] = acc;
    }
  }
  return y;
}

Mat norm(const Mat& x, const Tensor& g, const Tensor& b) {
  Mat y = x;
  for (auto& row : y) {
    double mu = 0.0, var = 0.0;
    for (double v : row) mu += v / static_cast<double>(row.size());
    for (double v : row) var += (v - mu) * (v - mu) / static_cast<double>(row.size());
    for (std::size_t i = 0; i < row.size(); ++i) row[i] = (row[i] - mu) / std::sqrt(var + 1e-5) * g[i] + b[i];
  }
  return y;
}

Mat plus(Mat a, const Mat& b) {
  for (std::size_t r = 0; r < a.size(); ++r) {
    for (std::size_t i = 0; i < a[r].size(); ++i) a[r][i] += b[r][i];
  }
  return a;
}

}  // namespace

TEST(Model, ParseKind) {
  EXPECT_EQ(parse_kind("v-tst"), ModelKind::VTst);
  EXPECT_EQ(parse_kind("ENC_TST_DEC_LSTM"), ModelKind::EncTstDecLstm);
  try {
    parse_kind("vtst2");
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("TST_LSTM"), std::string::npos);
  }
}

TEST(Model, EveryKindReturnsBatchHorizonTargets) {
  const auto x = random_tensor({2, 12, 15}, 1);
  const auto teacher = random_tensor({2, 6, 2}, 2);
  for (const auto kind : kAllKinds) {
    const Model m(small_spec(kind), 3);
    EXPECT_EQ(m.forward(x, &teacher, Mode::Train).shape(), (Shape{2, 6, 2})) << to_string(kind);
    EXPECT_EQ(m.forward(x, &teacher, Mode::Inference).shape(), (Shape{2, 6, 2})) << to_string(kind);
    if (uses_decoder_input(kind)) {
      EXPECT_THROW(m.forward(x, nullptr, Mode::Train), std::invalid_argument);
    } else {
      EXPECT_EQ(values(m.forward(x, nullptr, Mode::Train)), values(m.forward(x, &teacher, Mode::Train)));
    }
    EXPECT_THROW(m.forward(random_tensor({2, 11, 15}, 4), &teacher, Mode::Train), ShapeError);
  }
}

TEST(Model, SeededBuildIsBitIdentical) {
  for (const auto kind : kAllKinds) {
    const Model a(small_spec(kind), 42), b(small_spec(kind), 42), c(small_spec(kind), 43);
    ASSERT_EQ(a.parameters().entries().size(), b.parameters().entries().size());
    bool differs = false;
    for (std::size_t i = 0; i < a.parameters().entries().size(); ++i) {
      EXPECT_EQ(values(a.parameters().entries()[i].second), values(b.parameters().entries()[i].second));
      differs = differs || values(a.parameters().entries()[i].second) != values(c.parameters().entries()[i].second);
    }
    EXPECT_TRUE(differs);
    const auto x = random_tensor({3, 12, 15}, 5);
    const auto t = random_tensor({3, 6, 2}, 6);
    EXPECT_EQ(values(a.forward(x, &t, Mode::Inference)), values(b.forward(x, &t, Mode::Inference)));
  }
}

TEST(Model, CrossAttentionOnlyInEncoderDecoderTransformers) {
  for (const auto kind : kAllKinds) {
    const Model m(small_spec(kind), 1);
    bool cross = false;
    for (const auto& [name, t] : m.parameters().entries()) cross = cross || name.find("cross_attn") != std::string::npos;
    EXPECT_EQ(cross, uses_decoder_input(kind)) << to_string(kind);
  }
}

TEST(Model, DefaultParameterCountsFollowReferenceOrdering) {
  std::map<ModelKind, std::size_t> n;
  for (const auto kind : kAllKinds) {
    ModelSpec s;
    s.kind = kind;
    n[kind] = Model(s, 0).count_parameters();
  }
  EXPECT_LT(n[ModelKind::EncTst], n[ModelKind::Lstm]);
  EXPECT_LT(n[ModelKind::Lstm], n[ModelKind::EncTstDecLstm]);
  EXPECT_LT(n[ModelKind::EncTstDecLstm], n[ModelKind::VTst]);
  EXPECT_LT(n[ModelKind::VTst], n[ModelKind::TstLstm]);
  EXPECT_GE(n[ModelKind::VTst], 500000u);
  EXPECT_LE(n[ModelKind::VTst], 2000000u);
}

TEST(Model, CountIsSumOfParameterSizes) {
  const Model m(small_spec(ModelKind::TstLstm), 0);
  std::size_t total = 0;
  for (const auto& [name, t] : m.parameters().entries()) total += t.numel();
  EXPECT_EQ(m.count_parameters(), total);
}

TEST(Model, TeacherPerturbationOnlyAffectsLaterPositions) {
  for (const auto kind : {ModelKind::VTst, ModelKind::TstLstm}) {
    const Model m(small_spec(kind), 7);
    const auto x = random_tensor({2, 12, 15}, 8);
    const auto teacher = random_tensor({2, 6, 2}, 9);
    const auto base = m.forward(x, &teacher, Mode::Train);
    for (std::size_t t = 0; t < 6; ++t) {
      auto p = teacher.clone();
      for (std::size_t b = 0; b < 2; ++b) p.mutable_data()[(b * 6 + t) * 2] += 0.5;
      const auto out = m.forward(x, &p, Mode::Train);
      for (std::size_t b = 0; b < 2; ++b) {
        for (std::size_t s = 0; s < 6; ++s) {
          for (std::size_t j = 0; j < 2; ++j) {
            const auto i = (b * 6 + s) * 2 + j;
            if (s < t) {
              EXPECT_EQ(out[i], base[i]) << to_string(kind) << " t=" << t << " s=" << s;
            }
          }
        }
        EXPECT_NE(out[(b * 6 + t) * 2], base[(b * 6 + t) * 2]);
      }
    }
  }
}

TEST(Model, OwnPredictionsAsTeacherReproduceAutoregressiveOutput) {
  for (const auto kind : {ModelKind::VTst, ModelKind::TstLstm}) {
    const Model m(small_spec(kind), 10);
    const auto x = random_tensor({3, 12, 15}, 11);
    const auto start = random_tensor({3, 6, 2}, 12);
    const auto ar = m.forward(x, &start, Mode::Inference);
    std::vector<double> teacher(3 * 6 * 2, 0.0);
    for (std::size_t b = 0; b < 3; ++b) {
      for (std::size_t j = 0; j < 2; ++j) teacher[b * 12 + j] = start[b * 12 + j];
      for (std::size_t s = 1; s < 6; ++s) {
        for (std::size_t j = 0; j < 2; ++j) teacher[(b * 6 + s) * 2 + j] = ar[(b * 6 + s - 1) * 2 + j];
      }
    }
    const Tensor t({3, 6, 2}, teacher);
    EXPECT_EQ(values(m.forward(x, &t, Mode::Train)), values(ar)) << to_string(kind);
  }
}

TEST(Model, InferenceReadsOnlyTheStartRow) {
  for (const auto kind : {ModelKind::VTst, ModelKind::TstLstm}) {
    const Model m(small_spec(kind), 13);
    const auto x = random_tensor({2, 12, 15}, 14);
    const auto teacher = random_tensor({2, 6, 2}, 15);
    auto zeroed = teacher.clone();
    for (std::size_t b = 0; b < 2; ++b) {
      for (std::size_t i = 2; i < 12; ++i) zeroed.mutable_data()[b * 12 + i] = 0.0;
    }
    EXPECT_EQ(values(m.forward(x, &teacher, Mode::Inference)), values(m.forward(x, &zeroed, Mode::Inference)));
  }
}

TEST(Model, EncoderOnlyMatchesHandComposition) {
  ModelSpec s;
  s.kind = ModelKind::EncTst;
  s.n_encoders = 1;
  s.n_heads = 1;
  s.d_model = 6;
  s.ffn_width = 5;
  s.input_features = 3;
  s.output_features = 2;
  s.window = 4;
  s.horizon = 3;
  Model m(s, 21);
  // Move norms and biases off their trivial initial values.
  Rng rng(22);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (auto& [name, t] : m.parameters().entries()) {
    if (name.find("norm") != std::string::npos || name.ends_with(".bias")) {
      for (auto& v : t.mutable_data()) v += u(rng);
    }
  }
  const auto x = random_tensor({1, 4, 3}, 23);
  const auto got = m.forward(x, nullptr, Mode::Inference);

  Mat rows(4, std::vector<double>(3));
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 3; ++c) rows[r][c] = x[r * 3 + c];
  }
  Mat h = linear(rows, param(m, "enc.embed.weight"), param(m, "enc.embed.bias"));
  for (std::size_t p = 0; p < 4; ++p) {
    for (std::size_t i = 0; i < 6; ++i) {
      const double angle = static_cast<double>(p) / std::pow(10000.0, static_cast<double>(i - i % 2) / 6.0);
      h[p][i] += i % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  }
  const Mat n1 = norm(h, param(m, "enc.0.norm1.gain"), param(m, "enc.0.norm1.bias"));
  const Mat q = linear(n1, param(m, "enc.0.self_attn.wq.weight"), param(m, "enc.0.self_attn.wq.bias"));
  const Mat k = linear(n1, param(m, "enc.0.self_attn.wk.weight"), param(m, "enc.0.self_attn.wk.bias"));
  const Mat v = linear(n1, param(m, "enc.0.self_attn.wv.weight"), param(m, "enc.0.self_attn.wv.bias"));
  const Mat a = linear(oracle::attention(q, k, v).first, param(m, "enc.0.self_attn.wo.weight"),
                       param(m, "enc.0.self_attn.wo.bias"));
  h = plus(h, a);
  Mat f = linear(norm(h, param(m, "enc.0.norm2.gain"), param(m, "enc.0.norm2.bias")), param(m, "enc.0.ffn.fc1.weight"),
                 param(m, "enc.0.ffn.fc1.bias"));
  for (auto& row : f) {
    for (auto& val : row) val = std::max(0.0, val);
  }
  h = plus(h, linear(f, param(m, "enc.0.ffn.fc2.weight"), param(m, "enc.0.ffn.fc2.bias")));
  h = norm(h, param(m, "enc.norm.gain"), param(m, "enc.norm.bias"));
  Mat flat(1);
  for (const auto& row : h) flat[0].insert(flat[0].end(), row.begin(), row.end());
  const Mat y = linear(flat, param(m, "head.weight"), param(m, "head.bias"));
  ASSERT_EQ(got.numel(), y[0].size());
  for (std::size_t i = 0; i < y[0].size(); ++i) EXPECT_NEAR(got[i], y[0][i], 1e-10);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto path = std::filesystem::temp_directory_path() / "tsf_ckpt_roundtrip.tsfm";
  for (const auto kind : kAllKinds) {
    const Model m(small_spec(kind), 31);
    NormalizationStats stats{{{"a", "b"}, {1.5, -2.0}, {0.25, 3.0}}, {{"soc"}, {50.0}, {10.0}}};
    save_checkpoint(path, m, stats);
    const auto ck = read_checkpoint(path);
    EXPECT_EQ(ck.spec, m.spec());
    ASSERT_TRUE(ck.stats.has_value());
    EXPECT_EQ(*ck.stats, stats);
    const Model back = load_model(ck);
    for (std::size_t i = 0; i < m.parameters().entries().size(); ++i) {
      EXPECT_EQ(m.parameters().entries()[i].first, back.parameters().entries()[i].first);
      EXPECT_EQ(values(m.parameters().entries()[i].second), values(back.parameters().entries()[i].second));
    }
  }
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsForeignFiles) {
  const auto path = std::filesystem::temp_directory_path() / "tsf_not_a_ckpt.bin";
  {
    std::ofstream os(path, std::ios::binary);
    os << "definitely not a checkpoint";
  }
  EXPECT_THROW(read_checkpoint(path), std::runtime_error);
  std::filesystem::remove(path);
}
