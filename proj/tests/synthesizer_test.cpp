// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "ltgen/core/error.hpp"
#include "ltgen/core/io.hpp"
#include "ltgen/synth/synthesizer.hpp"
#include "test_support.hpp"

namespace ltgen::synth {
namespace {

using data::Dataset;
using data::ImageSample;
using data::kPixels;
using data::Split;
using testing::random_matrix;

constexpr double kPi = 3.14159265358979323846;

// Two classes of jittered Gaussian blobs, one centred top-left and one bottom-right.
Dataset blob_dataset(std::size_t per_class, std::uint64_t seed) {
  Dataset d;
  d.num_classes = 2;
  RngStream rng(seed, 77);
  const double centres[2][2] = {{5.0, 5.0}, {10.5, 10.0}};
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t k = 0; k < per_class; ++k) {
      ImageSample s;
      s.label = static_cast<std::uint8_t>(c);
      s.split = k % 10 == 0 ? Split::kVal : Split::kTrain;
      const double cx = centres[c][0] + rng.uniform(-1.0, 1.0);
      const double cy = centres[c][1] + rng.uniform(-1.0, 1.0);
      data::Image img{};
      for (std::size_t y = 0; y < 16; ++y)
        for (std::size_t x = 0; x < 16; ++x) {
          const double r2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
          const double v = 0.8 * std::exp(-r2 / 8.0) + 0.03 * rng.normal();
          s.pixels[y * 16 + x] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
        }
      for (std::size_t i = 0; i < kPixels; ++i) img[i] = s.intensity(i);
      s.sketch = data::extract_sketch(img);
      d.samples.push_back(s);
    }
  }
  return d;
}

std::vector<double> class_mean(std::span<const ImageSample> samples, std::size_t label) {
  std::vector<double> mean(kPixels, 0.0);
  std::size_t n = 0;
  for (const auto& s : samples) {
    if (s.label != label) continue;
    ++n;
    for (std::size_t i = 0; i < kPixels; ++i) mean[i] += s.intensity(i);
  }
  for (double& v : mean) v /= static_cast<double>(n);
  return mean;
}

std::vector<double> row_mean(const Matrix& m) {
  std::vector<double> mean(m.cols(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) mean[c] += m(r, c) / static_cast<double>(m.rows());
  return mean;
}

SynthConfig small_config() {
  SynthConfig c;
  c.steps = 20;
  c.embed_dim = 8;
  c.hidden1 = 16;
  c.hidden2 = 16;
  c.epochs = 2;
  c.batch_size = 16;
  c.seed = 5;
  return c;
}

// Trained once and shared by the sampling tests.
const Checkpoint& blob_checkpoint() {
  static const Checkpoint ck = [] {
    SynthConfig c;
    c.lr = 1e-3;
    c.epochs = 60;
    c.batch_size = 32;
    c.seed = 21;
    return train_synthesizer(blob_dataset(300, 4), c);
  }();
  return ck;
}

TEST(Schedule, FirstStepAndRecomputation) {
  const auto s = build_schedule(200, 1e-4, 0.02);
  EXPECT_NEAR(s.alpha_bar(1), 0.9999, 1e-15);
  double running = 1.0;
  for (std::size_t i = 0; i < 200; ++i) {
    running *= 1.0 - (1e-4 + (0.02 - 1e-4) * static_cast<double>(i) / 199.0);
  }
  EXPECT_NEAR(s.alpha_bar(200), running, 1e-12);
  EXPECT_NEAR(s.beta(200), 0.02, 1e-15);
}

TEST(Schedule, StrictlyDecreasingForRandomValidInputs) {
  RngStream rng(1, 2);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t T = 2 + rng.index(300);
    const double lo = rng.uniform(1e-5, 0.05);
    const double hi = rng.uniform(lo, 0.5);
    const auto s = build_schedule(T, lo, hi);
    for (std::size_t t = 1; t <= T; ++t) {
      EXPECT_GT(s.alpha_bar(t), 0.0);
      EXPECT_LT(s.alpha_bar(t), 1.0);
      const double scale = std::sqrt(s.alpha_bar(t));
      EXPECT_GT(scale, 0.0);
      EXPECT_LT(scale, 1.0);
      if (t > 1) EXPECT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
    }
  }
}

TEST(Schedule, RejectsInvalidRanges) {
  EXPECT_THROW(build_schedule(1, 1e-4, 0.02), ConfigError);
  EXPECT_THROW(build_schedule(10, 0.0, 0.02), ConfigError);
  EXPECT_THROW(build_schedule(10, 0.03, 0.02), ConfigError);
  EXPECT_THROW(build_schedule(10, 1e-4, 1.0), ConfigError);
  const auto s = build_schedule(10, 1e-3, 0.1);
  EXPECT_THROW(s.alpha_bar(0), ContractError);
  EXPECT_THROW(s.alpha_bar(11), ContractError);
}

TEST(ForwardDiffuse, LimitsAndRange) {
  const auto s = build_schedule(200, 1e-4, 0.02);
  RngStream rng(3, 1);
  const Matrix z0 = random_matrix(3, 256, rng);
  const Matrix eps = random_matrix(3, 256, rng);
  const Matrix zero(3, 256);
  const Matrix a = forward_diffuse(z0, 50, zero, s);
  const Matrix b = forward_diffuse(zero, 50, eps, s);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_DOUBLE_EQ(a[i], std::sqrt(s.alpha_bar(50)) * z0[i]);
    EXPECT_DOUBLE_EQ(b[i], std::sqrt(1.0 - s.alpha_bar(50)) * eps[i]);
  }
  EXPECT_THROW(forward_diffuse(z0, 0, eps, s), ContractError);
  EXPECT_THROW(forward_diffuse(z0, 201, eps, s), ContractError);
  EXPECT_THROW(forward_diffuse(Matrix(0, 256), 201, Matrix(0, 256), s), ContractError);
}

TEST(ForwardDiffuse, MonteCarloMoments) {
  const auto s = build_schedule(200, 1e-4, 0.02);
  const std::size_t n = 10000;
  const Matrix z0 = Matrix::from_rows({{0.8, 0.1, 0.45}});
  RngStream rng(8, 8);
  for (std::size_t t : {1, 20, 80, 150, 200}) {
    Matrix batch(n, 3), noise(n, 3);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < 3; ++c) {
        batch(r, c) = z0(0, c);
        noise(r, c) = rng.normal();
      }
    const Matrix zt = forward_diffuse(batch, t, noise, s);
    const double var = 1.0 - s.alpha_bar(t);
    for (std::size_t c = 0; c < 3; ++c) {
      double m = 0.0, m2 = 0.0;
      for (std::size_t r = 0; r < n; ++r) m += zt(r, c);
      m /= n;
      for (std::size_t r = 0; r < n; ++r) m2 += (zt(r, c) - m) * (zt(r, c) - m);
      m2 /= n - 1;
      EXPECT_NEAR(m, std::sqrt(s.alpha_bar(t)) * z0(0, c), 3.0 * std::sqrt(var / n)) << "t=" << t;
      EXPECT_NEAR(m2 / var, 1.0, 0.05) << "t=" << t;
    }
  }
}

TEST(Losses, LdmRiggedPredictors) {
  const auto s = build_schedule(50, 1e-3, 0.05);
  RngStream rng(4, 4);
  const Matrix z0 = random_matrix(4, 256, rng);
  const Matrix eps = random_matrix(4, 256, rng);
  const std::vector<std::size_t> t{1, 10, 25, 50}, c{0, 1, 0, 1};
  const NoisePredictor exact = [&](const Matrix&, auto, auto) { return eps; };
  const NoisePredictor offset = [&](const Matrix&, auto, auto) {
    Matrix m = eps;
    for (double& v : m.data()) v += 1.0;
    return m;
  };
  EXPECT_EQ(ldm_loss(exact, z0, t, eps, c, s), 0.0);
  EXPECT_NEAR(ldm_loss(offset, z0, t, eps, c, s), 1.0, 1e-15);
}

TEST(Losses, LdmMatchesScalarLoopAndTape) {
  const auto cfg = small_config();
  const auto s = build_schedule(cfg.steps, cfg.beta_min, 0.2);
  DenoiserModel model({3, cfg.steps, 8, 16, 16, 256}, s, 9);
  RngStream rng(6, 6);
  const Matrix z0 = random_matrix(5, 256, rng, 0.3);
  const Matrix eps = random_matrix(5, 256, rng);
  const std::vector<std::size_t> t{1, 4, 9, 15, 20}, c{0, 2, 1, 1, 2};

  Matrix zt(5, 256);
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t i = 0; i < 256; ++i) {
      double ab = 1.0;
      for (std::size_t k = 1; k <= t[r]; ++k) ab *= 1.0 - s.beta(k);
      zt(r, i) = std::sqrt(ab) * z0(r, i) + std::sqrt(1.0 - ab) * eps(r, i);
    }
  const Matrix pred = model.predict_noise(zt, t, c);
  double loop = 0.0;
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t i = 0; i < 256; ++i) loop += (pred(r, i) - eps(r, i)) * (pred(r, i) - eps(r, i));
  loop /= 5.0 * 256.0;

  const NoisePredictor p = [&](const Matrix& z, auto tt, auto cc) { return model.predict_noise(z, tt, cc); };
  EXPECT_NEAR(ldm_loss(p, z0, t, eps, c, s), loop, 1e-10);

  Tape tape;
  const auto bound = bind_parameters(tape, model.params());
  const SynthBatch batch{z0, t, eps, c, Matrix(5, 256)};
  const auto vars = record_loss(tape, bound, model, batch, s, 0.0);
  EXPECT_NEAR(tape.value(vars.ldm)[0], loop, 1e-10);
}

TEST(Losses, TapeForwardAgreesWithInference) {
  const auto s = build_schedule(20, 1e-3, 0.2);
  DenoiserModel model({4, 20, 8, 16, 16, 256}, s, 2);
  RngStream rng(7, 7);
  const Matrix z = random_matrix(6, 256, rng);
  const std::vector<std::size_t> t{1, 2, 7, 11, 19, 20}, c{0, 1, 2, 3, 0, 3};
  Tape tape;
  const auto bound = bind_parameters(tape, model.params());
  const auto out = model.forward(tape, bound, z, t, c, true);
  EXPECT_LT(max_abs_diff(tape.value(out.noise), model.predict_noise(z, t, c)), 1e-12);
  for (double v : tape.value(out.sketch).data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Losses, SketchLossExamples) {
  const auto s = NoiseSchedule::from_betas({0.75, 0.5});
  ASSERT_DOUBLE_EQ(s.alpha_bar(1), 0.25);
  Matrix gt(2, 256), pred(2, 256);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    gt[i] = i % 2 ? 1.0 : 0.0;
    pred[i] = gt[i] == 1.0 ? 0.6 : 0.4;
  }
  const std::vector<std::size_t> t1{1, 1};
  EXPECT_NEAR(sketch_loss(pred, gt, t1, s), 0.2, 1e-15);
  EXPECT_EQ(sketch_loss(gt, gt, t1, s), 0.0);

  const auto full = build_schedule(200, 1e-4, 0.02);
  const std::vector<std::size_t> early{10, 10}, late{150, 150};
  EXPECT_GT(sketch_loss(pred, gt, early, full), sketch_loss(pred, gt, late, full));
}

TEST(Losses, TotalLossExamples) {
  EXPECT_NEAR(total_loss(0.8, 0.2, 0.1), 0.82, 1e-15);
  EXPECT_EQ(total_loss(0.8, 0.2, 0.0), 0.8);
  EXPECT_THROW(total_loss(0.8, 0.2, -0.1), ContractError);
  EXPECT_EQ(SynthConfig{}.sketch_weight, 0.1);
  EXPECT_EQ(SynthConfig{}.lr, 1e-4);
}

class TapeLoss : public ::testing::Test {
 protected:
  void SetUp() override {
    RngStream rng(12, 12);
    batch = {random_matrix(4, 256, rng, 0.4), {1, 5, 13, 20}, random_matrix(4, 256, rng), {0, 2, 1, 2}, Matrix(4, 256)};
    for (double& v : batch.sketch.data()) v = rng.uniform() < 0.3 ? 1.0 : 0.0;
  }
  NoiseSchedule schedule = build_schedule(20, 1e-3, 0.2);
  DenoiserModel model{{3, 20, 8, 16, 16, 256}, schedule, 5};
  SynthBatch batch;
};

TEST_F(TapeLoss, ZeroLambdaReducesExactlyAndStopsSketchGradients) {
  Tape tape;
  const auto bound = bind_parameters(tape, model.params());
  const auto vars = record_loss(tape, bound, model, batch, schedule, 0.0);
  EXPECT_EQ(tape.value(vars.total)[0], tape.value(vars.ldm)[0]);
  auto grads = tape.backward(vars.total);
  const auto g = collect_gradients(grads, bound);
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double norm = frobenius_norm(g[k]);
    if (DenoiserModel::is_sketch_head(k)) EXPECT_EQ(norm, 0.0) << model.params()[k].name;
  }

  Tape tape2;
  const auto bound2 = bind_parameters(tape2, model.params());
  const auto vars2 = record_loss(tape2, bound2, model, batch, schedule, 0.1);
  auto grads2 = tape2.backward(vars2.total);
  const auto g2 = collect_gradients(grads2, bound2);
  EXPECT_GT(frobenius_norm(g2[DenoiserModel::kSketchWeight]), 0.0);
  EXPECT_GT(frobenius_norm(g2[DenoiserModel::kSketchBias]), 0.0);
  EXPECT_NEAR(tape2.value(vars2.total)[0],
              total_loss(tape2.value(vars2.ldm)[0], tape2.value(vars2.sketch)[0], 0.1), 1e-14);
}

TEST_F(TapeLoss, EveryParameterMatchesFiniteDifferences) {
  auto loss = [&] {
    Tape t;
    const auto b = bind_parameters(t, model.params());
    return t.value(record_loss(t, b, model, batch, schedule, 0.1).total)[0];
  };
  Tape tape;
  const auto bound = bind_parameters(tape, model.params());
  auto grads = tape.backward(record_loss(tape, bound, model, batch, schedule, 0.1).total);
  const auto g = collect_gradients(grads, bound);
  RngStream rng(13, 13);
  for (std::size_t k = 0; k < g.size(); ++k) {
    EXPECT_LT(testing::worst_gradient_error(loss, model.params()[k].value, g[k], rng, 20), 1e-4)
        << model.params()[k].name;
  }
}

TEST(Training, TwoClassLossHalvesAndIsDeterministic) {
  const auto ds = data::generate_dataset({2, 100, 1.0}, 11);
  SynthConfig c;
  c.epochs = 30;
  c.seed = 3;
  const auto a = train_synthesizer(ds, c);
  ASSERT_EQ(a.loss_history.size(), 30u);
  EXPECT_EQ(a.epochs_trained, 30u);
  // Seeded reference run: 1.2471 -> 0.4660.
  EXPECT_LT(a.loss_history.back(), 0.5 * a.loss_history.front());
  const auto b = train_synthesizer(ds, c);
  EXPECT_EQ(a.loss_history, b.loss_history);
}

TEST(Training, RejectsClassWithoutTrainingImages) {
  auto ds = data::generate_dataset({2, 10, 1.0}, 1);
  std::erase_if(ds.samples, [](const ImageSample& s) { return s.label == 1 && s.split == Split::kTrain; });
  EXPECT_THROW(train_synthesizer(ds, small_config()), ContractError);
}

TEST(Sampling, EdgeCasesAndErrors) {
  const auto ds = data::generate_dataset({2, 10, 1.0}, 1);
  auto c = small_config();
  const auto ck = train_synthesizer(ds, c);
  EXPECT_EQ(sample(ck, 0, 0, 1).rows(), 0u);
  EXPECT_THROW(sample(ck, 2, 1, 1), ContractError);
  Checkpoint untrained = ck;
  untrained.epochs_trained = 0;
  EXPECT_THROW(sample(untrained, 0, 1, 1), ModelError);
  EXPECT_THROW(sample(Checkpoint{}, 0, 1, 1), ModelError);

  const Matrix a = sample(ck, 1, 5, 42);
  const Matrix b = sample(ck, 1, 5, 42);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, sample(ck, 1, 5, 43));
  for (double v : a.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }

  std::size_t calls = 0, expected_t = c.steps;
  sample(ck, 0, 3, 9, [&](std::size_t t, const Matrix& x) {
    EXPECT_EQ(t, expected_t--);
    EXPECT_EQ(x.rows(), 3u);
    EXPECT_EQ(x.cols(), 256u);
    EXPECT_TRUE(all_finite(x));
    ++calls;
  });
  EXPECT_EQ(calls, c.steps);
}

TEST(Sampling, ReverseChainRecoversPointMass) {
  const auto s = build_schedule(200, 1e-4, 0.02);
  std::vector<double> target(256);
  for (std::size_t i = 0; i < 256; ++i) target[i] = 0.1 + 0.7 * std::sin(kPi * i / 256.0);
  // Exact ε for a distribution concentrated on `target`.
  const NoisePredictor oracle = [&](const Matrix& z, std::span<const std::size_t> t, auto) {
    Matrix e(z.rows(), z.cols());
    for (std::size_t r = 0; r < z.rows(); ++r) {
      const double ab = s.alpha_bar(t[r]);
      for (std::size_t i = 0; i < z.cols(); ++i) e(r, i) = (z(r, i) - std::sqrt(ab) * target[i]) / std::sqrt(1.0 - ab);
    }
    return e;
  };
  RngStream rng(2, 2);
  const Matrix x = reverse_chain(oracle, s, 0, 4, rng, false);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t i = 0; i < 256; ++i) EXPECT_NEAR(x(r, i), target[i], 1e-9);
}

TEST(Sampling, BlobMeansMatchRealMeans) {
  const auto& ck = blob_checkpoint();
  const auto ds = blob_dataset(300, 4);
  const auto train = ds.split(Split::kTrain);
  std::vector<std::vector<double>> real{class_mean(train, 0), class_mean(train, 1)};
  for (std::size_t c = 0; c < 2; ++c) {
    const auto gen = row_mean(sample(ck, c, 500, 100 + c));
    double linf = 0.0, own = 0.0, other = 0.0;
    for (std::size_t i = 0; i < kPixels; ++i) {
      linf = std::max(linf, std::abs(gen[i] - real[c][i]));
      own += (gen[i] - real[c][i]) * (gen[i] - real[c][i]);
      other += (gen[i] - real[1 - c][i]) * (gen[i] - real[1 - c][i]);
    }
    EXPECT_LT(linf, 0.1) << "class " << c;
    EXPECT_LT(own, other) << "class " << c;
  }
}

TEST(Checkpoint, RoundTripAndCorruption) {
  const auto ds = data::generate_dataset({2, 10, 1.0}, 1);
  const auto ck = train_synthesizer(ds, small_config());
  const auto bytes = encode_checkpoint(ck);
  const auto back = decode_checkpoint(bytes);
  EXPECT_EQ(back.epochs_trained, ck.epochs_trained);
  EXPECT_EQ(back.loss_history, ck.loss_history);
  EXPECT_EQ(describe(back.config), describe(ck.config));
  ASSERT_EQ(back.model.params().size(), ck.model.params().size());
  for (std::size_t k = 0; k < ck.model.params().size(); ++k) {
    EXPECT_EQ(back.model.params()[k].value, ck.model.params()[k].value);
  }
  EXPECT_EQ(sample(back, 1, 3, 5), sample(ck, 1, 3, 5));

  auto flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x10;
  EXPECT_THROW(decode_checkpoint(flipped), CorruptionError);
  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(decode_checkpoint(truncated), CorruptionError);
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(magic), FormatError);

  auto params = ck.model.params();
  params[DenoiserModel::kInput].value = Matrix(3, 3);
  EXPECT_THROW(DenoiserModel(ck.model.config(), ck.schedule, params), ModelError);

  const auto path = std::filesystem::temp_directory_path() / "ltgen_ck_test.bin";
  save_checkpoint(ck, path);
  EXPECT_EQ(load_checkpoint(path).loss_history, ck.loss_history);
  std::filesystem::remove(path);
}

TEST(Pool, SizesRangeAndRoundTrip) {
  const auto ds = data::generate_dataset({3, 10, 1.0}, 1);
  const auto ck = train_synthesizer(ds, small_config());
  const auto pool = generate_pool(ck, 7, 3);
  ASSERT_EQ(pool.num_classes(), 3u);
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_EQ(pool.size(c), 7u);
    for (double v : pool.images[c].data()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
  EXPECT_EQ(pool.checkpoint_epoch, ck.epochs_trained);
  const auto bytes = encode_pool(pool);
  const auto back = decode_pool(bytes);
  EXPECT_EQ(back.images, pool.images);
  EXPECT_EQ(back.seed, 3u);
  auto bad = bytes;
  bad[bad.size() - 9] ^= 1;
  EXPECT_THROW(decode_pool(bad), CorruptionError);
}

}  // namespace
}  // namespace ltgen::synth
