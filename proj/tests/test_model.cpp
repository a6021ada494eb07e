#include <cmath>
#include <fstream>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "stereo/kernels.hpp"
#include "stereo/model/core.hpp"
#include "stereo/model/weights.hpp"

using namespace stereo;
using testutil::random_tensor;

namespace {

// Brute-force dot-product oracle for the level-0 correlation volume.
Tensorf correlation_oracle(const Tensorf& fl, const Tensorf& fr) {
  const Shape4& s = fl.shape();
  Tensorf vol(1, s.h, s.w, s.w);
  for (Index i = 0; i < s.h; ++i)
    for (Index j = 0; j < s.w; ++j)
      for (Index k = 0; k < s.w; ++k) {
        double acc = 0;
        for (Index c = 0; c < s.c; ++c)
          acc += double(fl(0, c, i, j)) * double(fr(0, c, i, k));
        vol(0, i, j, k) = float(acc / std::sqrt(double(s.c)));
      }
  return vol;
}

float max_abs_diff(const Tensorf& a, const Tensorf& b) {
  REQUIRE(a.shape() == b.shape());
  float m = 0;
  for (Index i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

// Minimal arch for fast full-pipeline runs.
ArchDescriptor micro_arch() {
  ArchDescriptor a;
  a.feature_channels = 8;
  a.enc1_channels = 8;
  a.enc2_channels = 8;
  a.context_channels = 8;
  a.hidden_channels = 8;
  a.motion_channels = 8;
  a.head_channels = 8;
  a.corr_levels = 2;
  a.corr_radius = 2;
  a.default_iters = 2;
  return a;
}

}  // namespace

TEST_CASE("pad_to_multiple geometry and edge replication") {
  Tensorf a(1, 1, 384, 1248);
  auto [pa, ra] = pad_to_multiple(a, 32);
  CHECK(pa.shape() == Shape4{1, 1, 384, 1248});
  CHECK(ra.pad_h == 0);
  CHECK(ra.pad_w == 0);

  std::mt19937_64 rng(5);
  Tensorf b = random_tensor({1, 2, 375, 1242}, rng);
  auto [pb, rb] = pad_to_multiple(b, 32);
  CHECK(pb.shape() == Shape4{1, 2, 384, 1248});
  CHECK(rb.pad_h == 9);
  CHECK(rb.pad_w == 6);
  CHECK(rb.orig_h == 375);
  CHECK(rb.orig_w == 1242);
  CHECK(pb(0, 1, 380, 100) == b(0, 1, 374, 100));   // bottom rows replicate
  CHECK(pb(0, 0, 10, 1247) == b(0, 0, 10, 1241));   // right cols replicate
  CHECK(pb(0, 0, 383, 1247) == b(0, 0, 374, 1241)); // corner

  Tensorf c(1, 3, 1, 1);
  c(0, 0, 0, 0) = 7.0f;
  auto [pc, rc] = pad_to_multiple(c, 32);
  CHECK(pc.shape() == Shape4{1, 3, 32, 32});
  CHECK(pc(0, 0, 31, 31) == 7.0f);
}

TEST_CASE("weight manifest, random init and file roundtrip") {
  const ArchDescriptor arch = ArchDescriptor::tiny();
  ModelWeights w1 = ModelWeights::random(arch, 99);
  ModelWeights w2 = ModelWeights::random(arch, 99);
  ModelWeights w3 = ModelWeights::random(arch, 100);
  w1.validate();

  bool identical = true, differs = false;
  for (const auto& [name, t] : w1.params()) {
    identical &= max_abs_diff(t, w2.at(name)) == 0.0f;
    differs |= max_abs_diff(t, w3.at(name)) != 0.0f;
  }
  CHECK(identical);
  CHECK(differs);

  testutil::TempDir dir("weights");
  const auto path = dir.path() / "model.irsw";
  save_weights(w1, path);
  ModelWeights loaded = load_weights(path, arch);
  for (const auto& [name, t] : w1.params())
    CHECK(max_abs_diff(t, loaded.at(name)) == 0.0f);

  // magic validation
  {
    std::ifstream f(path, std::ios::binary);
    std::string blob((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    blob[0] = 'X';
    std::ofstream o(dir.path() / "bad.irsw", std::ios::binary);
    o.write(blob.data(), std::streamsize(blob.size()));
  }
  CHECK_THROWS_AS(load_weights(dir.path() / "bad.irsw", arch), FormatError);
  CHECK_THROWS_AS(load_weights(dir.path() / "absent.irsw", arch), IoError);

  // architecture coverage: a bigger manifest must reject the file
  ArchDescriptor bigger = arch;
  bigger.gru_levels = 2;
  CHECK_THROWS_AS(load_weights(path, bigger), FormatError);
}

TEST_CASE("extract_features: shared weights and shape contract") {
  std::mt19937_64 rng(7);
  ModelWeights w = ModelWeights::random(ArchDescriptor::tiny(), 1);
  Tensorf img = random_tensor({1, 3, 64, 64}, rng);
  auto [fl, fr] = extract_features(img, img, w);
  CHECK(fl.shape() == Shape4{1, 32, 16, 16});
  CHECK(max_abs_diff(fl, fr) == 0.0f);

  // standard descriptor keeps 256 channels at 1/4 resolution
  ModelWeights ws = ModelWeights::random(ArchDescriptor::standard(), 2);
  Tensorf im2 = random_tensor({1, 3, 64, 64}, rng);
  auto [sl, sr] = extract_features(im2, random_tensor({1, 3, 64, 64}, rng), ws);
  CHECK(sl.shape() == Shape4{1, 256, 16, 16});
  CHECK(sr.shape() == Shape4{1, 256, 16, 16});

  // determinism: the same call twice is bit-identical
  auto [gl, gr] = extract_features(im2, im2, ws);
  auto [hl, hr] = extract_features(im2, im2, ws);
  CHECK(max_abs_diff(gl, hl) == 0.0f);

  Tensorf odd = random_tensor({1, 3, 64, 32}, rng);
  CHECK_THROWS_AS(extract_features(img, odd, w), std::invalid_argument);
}

TEST_CASE("correlation pyramid: forced values and the triple-loop oracle") {
  // all-ones features, F=4: every entry is 4/sqrt(4) = 2
  Tensorf ones = Tensorf::full({1, 4, 3, 5}, 1.0f);
  CorrelationPyramid unit = build_correlation_pyramid(ones, ones, 2);
  for (Index i = 0; i < unit.levels[0].size(); ++i)
    CHECK(unit.levels[0].data()[i] == doctest::Approx(2.0f));

  // orthogonal feature columns correlate to zero
  Tensorf fl(1, 2, 1, 2), fr(1, 2, 1, 2);
  fl(0, 0, 0, 0) = 1.0f;  // column 0 = e0
  fl(0, 1, 0, 1) = 1.0f;  // column 1 = e1
  fr(0, 1, 0, 0) = 1.0f;  // column 0 = e1
  fr(0, 0, 0, 1) = 1.0f;  // column 1 = e0
  CorrelationPyramid ortho = build_correlation_pyramid(fl, fr, 1);
  CHECK(ortho.levels[0](0, 0, 0, 0) == 0.0f);
  CHECK(ortho.levels[0](0, 0, 1, 1) == 0.0f);

  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Tensorf a = random_tensor({1, 8, 8, 8}, rng);
    Tensorf b = random_tensor({1, 8, 8, 8}, rng);
    CorrelationPyramid pyr = build_correlation_pyramid(a, b, 4);
    CHECK(max_abs_diff(pyr.levels[0], correlation_oracle(a, b)) < 1e-5f);
    for (int l = 1; l < 4; ++l)
      CHECK(max_abs_diff(pyr.levels[l], avg_pool_last(pyr.levels[0], 1 << l)) == 0.0f);
  }
}

TEST_CASE("correlation self-similarity peak") {
  std::mt19937_64 rng(13);
  std::normal_distribution<float> gauss(0.0f, 1.0f);
  Tensorf f(1, 32, 16, 32);
  for (Index i = 0; i < f.size(); ++i) f.data()[i] = gauss(rng);
  CorrelationPyramid pyr = build_correlation_pyramid(f, f, 1);
  int hits = 0, total = 0;
  for (Index i = 0; i < 16; ++i)
    for (Index j = 0; j < 32; ++j, ++total) {
      auto row = pyr.levels[0].row_span(0, i, j);
      Index best = 0;
      for (Index k = 1; k < 32; ++k)
        if (row[k] > row[best]) best = k;  // ties keep the lowest k
      hits += best == j;
    }
  CHECK(double(hits) / total >= 0.99);
}

TEST_CASE("lookup: definition cases and the loop oracle") {
  std::mt19937_64 rng(17);
  Tensorf fl = random_tensor({1, 8, 4, 10}, rng);
  Tensorf fr = random_tensor({1, 8, 4, 10}, rng);
  CorrelationPyramid pyr = build_correlation_pyramid(fl, fr, 3);
  const Tensorf& vol = pyr.levels[0];

  Tensorf zero_disp(1, 1, 4, 10);
  Tensorf feats = lookup(pyr, zero_disp, 1);
  CHECK(feats.shape() == Shape4{1, 9, 4, 10});
  for (Index i = 0; i < 4; ++i)
    for (Index j = 0; j < 10; ++j) {
      const float left = j >= 1 ? vol(0, i, j, j - 1) : 0.0f;
      const float right = j + 1 < 10 ? vol(0, i, j, j + 1) : 0.0f;
      CHECK(feats(0, 0, i, j) == doctest::Approx(left));
      CHECK(feats(0, 1, i, j) == doctest::Approx(vol(0, i, j, j)));
      CHECK(feats(0, 2, i, j) == doctest::Approx(right));
    }

  // fractional disparity: center tap blends bins j and j-1 equally
  Tensorf half = Tensorf::full({1, 1, 4, 10}, 0.5f);
  Tensorf hf = lookup(pyr, half, 1);
  for (Index i = 0; i < 4; ++i)
    for (Index j = 1; j < 10; ++j)
      CHECK(hf(0, 1, i, j) ==
            doctest::Approx(0.5f * (vol(0, i, j, j) + vol(0, i, j, j - 1))).epsilon(1e-6));

  // random disparities against a per-pixel loop oracle
  std::uniform_real_distribution<float> dd(-3.0f, 12.0f);
  Tensorf disp(1, 1, 4, 10);
  for (Index i = 0; i < disp.size(); ++i) disp.data()[i] = dd(rng);
  const int radius = 4;
  Tensorf got = lookup(pyr, disp, radius);
  CHECK(got.shape() == Shape4{1, 27, 4, 10});
  for (Index i = 0; i < 4; ++i)
    for (Index j = 0; j < 10; ++j)
      for (int l = 0; l < 3; ++l)
        for (int t = 0; t < 9; ++t) {
          const double x = (double(j) - double(disp(0, 0, i, j)) + (t - radius)) / double(1 << l);
          const float want = bilinear_sample_1d<float>(pyr.levels[l].row_span(0, i, j), x);
          CHECK(std::abs(got(0, l * 9 + t, i, j) - want) <= 1e-6f);
        }
}

TEST_CASE("gru_update: zero weights give half-open gates and no motion") {
  ArchDescriptor arch = micro_arch();
  ModelWeights w = ModelWeights::zeros(arch);
  const Index h4 = 4, w4 = 6;
  GruState state;
  ContextSet ctx;
  // levels are ceil-halved: (4,6) -> (2,3) -> (1,2)
  for (auto [lh, lw] : {std::pair<Index, Index>{4, 6}, {2, 3}, {1, 2}}) {
    state.hidden.push_back(Tensorf(1, arch.hidden_channels, lh, lw));
    ctx.ctx.push_back(Tensorf(1, arch.context_channels, lh, lw));
  }
  Tensorf corr(1, arch.corr_channels(), h4, w4);
  Tensorf disp(1, 1, h4, w4);

  GruOutput out = gru_update(state, ctx, corr, disp, w);
  for (const Tensorf& h : out.state.hidden)
    for (Index i = 0; i < h.size(); ++i) CHECK(h.data()[i] == 0.0f);
  for (Index i = 0; i < out.delta.size(); ++i) CHECK(out.delta.data()[i] == 0.0f);
}

TEST_CASE("gru_update: saturated update gate freezes the state") {
  ArchDescriptor arch = micro_arch();
  ModelWeights w = ModelWeights::random(arch, 3);
  for (int l = 0; l < arch.gru_levels; ++l) {
    const std::string g = "gru" + std::to_string(l);
    w.set(g + ".convz.weight", Tensorf(w.at(g + ".convz.weight").shape()));
    w.set(g + ".convz.bias",
          Tensorf::full(w.at(g + ".convz.bias").shape(), -20.0f));
  }

  std::mt19937_64 rng(19);
  const Index h4 = 8, w4 = 8;
  GruState state;
  ContextSet ctx;
  for (int l = 0; l < 3; ++l) {
    state.hidden.push_back(random_tensor({1, arch.hidden_channels, h4 >> l, w4 >> l}, rng));
    ctx.ctx.push_back(random_tensor({1, arch.context_channels, h4 >> l, w4 >> l}, rng));
  }
  Tensorf corr = random_tensor({1, arch.corr_channels(), h4, w4}, rng);
  Tensorf disp = random_tensor({1, 1, h4, w4}, rng, 0.0f, 5.0f);

  GruOutput out = gru_update(state, ctx, corr, disp, w);
  for (int l = 0; l < 3; ++l)
    CHECK(max_abs_diff(out.state.hidden[l], state.hidden[l]) < 1e-6f);
}

TEST_CASE("gru_update: 1x1 instance matches scalar reference formulas") {
  ArchDescriptor arch;
  arch.feature_channels = 4;
  arch.enc1_channels = 4;
  arch.enc2_channels = 4;
  arch.context_channels = 2;
  arch.hidden_channels = 3;
  arch.motion_channels = 4;
  arch.head_channels = 3;
  arch.gru_levels = 1;
  arch.corr_levels = 2;
  arch.corr_radius = 1;
  ModelWeights w = ModelWeights::random(arch, 21);

  std::mt19937_64 rng(23);
  GruState state{{random_tensor({1, 3, 1, 1}, rng)}};
  ContextSet ctx{{random_tensor({1, 2, 1, 1}, rng)}};
  Tensorf corr = random_tensor({1, arch.corr_channels(), 1, 1}, rng);
  Tensorf disp = random_tensor({1, 1, 1, 1}, rng, 0.0f, 4.0f);

  GruOutput out = gru_update(state, ctx, corr, disp, w);

  // scalar reference: at 1x1 spatial size every KxK conv with pad K/2
  // reduces to its center tap
  auto scalar_conv = [&](const std::string& layer, const std::vector<double>& in) {
    const Tensorf& kw = w.at(layer + ".weight");
    const auto b = w.bias(layer);
    const Index kc = kw.shape().h / 2;
    std::vector<double> out_vec(kw.shape().n);
    for (Index o = 0; o < kw.shape().n; ++o) {
      double acc = b[o];
      for (Index c = 0; c < kw.shape().c; ++c) acc += double(kw(o, c, kc, kc)) * in[c];
      out_vec[o] = acc;
    }
    return out_vec;
  };
  auto vrelu = [](std::vector<double> v) {
    for (double& x : v) x = std::max(0.0, x);
    return v;
  };
  auto tensor_vec = [](const Tensorf& t) {
    std::vector<double> v(t.size());
    for (Index i = 0; i < t.size(); ++i) v[i] = double(t.data()[i]);
    return v;
  };
  auto cat = [](std::vector<double> a, const std::vector<double>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  };

  // motion features
  std::vector<double> c1 = vrelu(scalar_conv("menc.corr1", tensor_vec(corr)));
  std::vector<double> c2 = vrelu(scalar_conv("menc.corr2", c1));
  std::vector<double> d1 = vrelu(scalar_conv("menc.disp1", tensor_vec(disp)));
  std::vector<double> d2 = vrelu(scalar_conv("menc.disp2", d1));
  std::vector<double> fused = vrelu(scalar_conv("menc.fuse", cat(c2, d2)));
  std::vector<double> motion = cat(fused, tensor_vec(disp));

  std::vector<double> h = tensor_vec(state.hidden[0]);
  std::vector<double> x = cat(tensor_vec(ctx.ctx[0]), motion);
  std::vector<double> hx = cat(h, x);
  std::vector<double> zv = scalar_conv("gru0.convz", hx);
  std::vector<double> rv = scalar_conv("gru0.convr", hx);
  for (double& v : zv) v = 1.0 / (1.0 + std::exp(-v));
  for (double& v : rv) v = 1.0 / (1.0 + std::exp(-v));
  std::vector<double> rh(3);
  for (int i = 0; i < 3; ++i) rh[i] = rv[i] * h[i];
  std::vector<double> qv = scalar_conv("gru0.convq", cat(rh, x));
  for (double& v : qv) v = std::tanh(v);
  std::vector<double> hnew(3);
  for (int i = 0; i < 3; ++i) hnew[i] = (1.0 - zv[i]) * h[i] + zv[i] * qv[i];

  for (int i = 0; i < 3; ++i)
    CHECK(std::abs(double(out.state.hidden[0](0, i, 0, 0)) - hnew[i]) <= 1e-6);

  std::vector<double> hd = vrelu(scalar_conv("head.conv1", hnew));
  std::vector<double> delta = scalar_conv("head.conv2", hd);
  CHECK(std::abs(double(out.delta(0, 0, 0, 0)) - delta[0]) <= 1e-6);
}

TEST_CASE("gru state stays tanh-bounded under random weights") {
  ArchDescriptor arch = micro_arch();
  ModelWeights w = ModelWeights::random(arch, 31);
  std::mt19937_64 rng(37);
  const Index h4 = 8, w4 = 16;
  GruState state;
  ContextSet ctx;
  for (int l = 0; l < 3; ++l) {
    state.hidden.push_back(random_tensor({1, arch.hidden_channels, h4 >> l, w4 >> l}, rng));
    ctx.ctx.push_back(random_tensor({1, arch.context_channels, h4 >> l, w4 >> l}, rng, -4.0f, 4.0f));
  }
  Tensorf corr = random_tensor({1, arch.corr_channels(), h4, w4}, rng, -5.0f, 5.0f);
  Tensorf disp(1, 1, h4, w4);

  for (int it = 0; it < 12; ++it) {
    GruOutput out = gru_update(state, ctx, corr, disp, w);
    state = std::move(out.state);
    for (Index i = 0; i < disp.size(); ++i) disp.data()[i] += out.delta.data()[i];
    for (const Tensorf& h : state.hidden) {
      CHECK(h.all_finite());
      for (Index i = 0; i < h.size(); ++i) {
        CHECK(h.data()[i] >= -1.0f);
        CHECK(h.data()[i] <= 1.0f);
      }
    }
  }
}

TEST_CASE("convex_upsample: convex combinations of the coarse field") {
  std::mt19937_64 rng(41);
  const Index h = 3, w = 4;

  Tensorf constant = Tensorf::full({1, 1, h, w}, 2.75f);
  Tensorf logits = random_tensor({1, 144, h, w}, rng, -3.0f, 3.0f);
  Tensorf up = convex_upsample(constant, logits);
  CHECK(up.shape() == Shape4{1, 1, 12, 16});
  for (Index i = 0; i < up.size(); ++i)
    CHECK(std::abs(up.data()[i] - 4.0f * 2.75f) <= 1e-5f);

  // uniform logits: interior outputs are 4x the 3x3 neighborhood mean
  Tensorf field = random_tensor({1, 1, h, w}, rng, 0.0f, 10.0f);
  Tensorf uniform(1, 144, h, w);
  Tensorf up2 = convex_upsample(field, uniform);
  for (Index y = 4; y < 8; ++y)
    for (Index x = 4; x < 12; ++x) {
      const Index ci = y / 4, cj = x / 4;
      double mean = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) mean += field(0, 0, ci + dy, cj + dx);
      mean /= 9.0;
      CHECK(std::abs(up2(0, 0, y, x) - 4.0 * mean) <= 1e-5);
    }

  // +40 on the center tap saturates the softmax to nearest-parent
  Tensorf onehot(1, 144, h, w);
  for (Index k = 0; k < 16; ++k)
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x) onehot(0, k * 9 + 4, y, x) = 40.0f;
  Tensorf up3 = convex_upsample(field, onehot);
  for (Index y = 0; y < 4 * h; ++y)
    for (Index x = 0; x < 4 * w; ++x)
      CHECK(std::abs(up3(0, 0, y, x) - 4.0f * field(0, 0, y / 4, x / 4)) <= 1e-4f);

  // convexity: every output lies in 4x the clamped neighborhood range
  Tensorf wild = random_tensor({1, 144, h, w}, rng, -20.0f, 20.0f);
  Tensorf up4 = convex_upsample(field, wild);
  for (Index y = 0; y < 4 * h; ++y)
    for (Index x = 0; x < 4 * w; ++x) {
      const Index ci = y / 4, cj = x / 4;
      float lo = 1e30f, hi = -1e30f;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const Index ni = std::clamp<Index>(ci + dy, 0, h - 1);
          const Index nj = std::clamp<Index>(cj + dx, 0, w - 1);
          lo = std::min(lo, field(0, 0, ni, nj));
          hi = std::max(hi, field(0, 0, ni, nj));
        }
      CHECK(up4(0, 0, y, x) >= 4.0f * lo - 1e-5f);
      CHECK(up4(0, 0, y, x) <= 4.0f * hi + 1e-5f);
    }

  Tensorf badmask(1, 72, h, w);
  CHECK_THROWS_AS(convex_upsample(field, badmask), std::invalid_argument);
}

TEST_CASE("infer: zero iterations, shape contract, determinism") {
  ModelWeights w = ModelWeights::random(micro_arch(), 55);
  std::mt19937_64 rng(57);

  ImageU8 left = testutil::random_image(45, 13, 3, rng);
  ImageU8 right = testutil::random_image(45, 13, 3, rng);

  DisparityMap zero = infer(left, right, w, 0);
  CHECK(zero.width == 45);
  CHECK(zero.height == 13);
  for (float v : zero.disparity) CHECK(v == 0.0f);

  DisparityMap a = infer(left, right, w, 3);
  DisparityMap b = infer(left, right, w, 3);
  CHECK(a.disparity == b.disparity);

  for (auto [ww, hh] : {std::pair{1, 1}, {7, 3}, {32, 32}, {65, 40}}) {
    ImageU8 l = testutil::random_image(ww, hh, 3, rng);
    ImageU8 r = testutil::random_image(ww, hh, 3, rng);
    DisparityMap d = infer(l, r, w, 1);
    CHECK(d.width == ww);
    CHECK(d.height == hh);
    CHECK(d.valid_count() == size_t(ww) * size_t(hh));
    bool finite = true;
    for (float v : d.disparity) finite &= std::isfinite(v);
    CHECK(finite);
  }

  ImageU8 narrow = testutil::random_image(31, 13, 3, rng);
  CHECK_THROWS_AS(infer(left, narrow, w), std::invalid_argument);
}

TEST_CASE("context-derived initial state is tanh-bounded") {
  ModelWeights w = ModelWeights::random(micro_arch(), 61);
  std::mt19937_64 rng(63);
  Tensorf img = random_tensor({1, 3, 32, 64}, rng);
  auto [ctx, state] = extract_context(img, w);
  CHECK(state.hidden.size() == 3);
  CHECK(state.hidden[0].shape() == Shape4{1, 8, 8, 16});
  CHECK(state.hidden[1].shape() == Shape4{1, 8, 4, 8});
  CHECK(state.hidden[2].shape() == Shape4{1, 8, 2, 4});
  for (const Tensorf& h : state.hidden)
    for (Index i = 0; i < h.size(); ++i) {
      CHECK(h.data()[i] >= -1.0f);
      CHECK(h.data()[i] <= 1.0f);
    }
}
