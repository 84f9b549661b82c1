#include "nisnn/export.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "nisnn/errors.hpp"

namespace nisnn {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::vector<std::string> score_axes(AttentionKind kind) {
  switch (kind) {
    case AttentionKind::kLinearSeq: return {"head", "query", "key"};
    case AttentionKind::kLinearChanSeq: return {"channel", "head", "query", "key"};
    case AttentionKind::kConvSeq: return {"query", "key"};
    case AttentionKind::kConvChanSeq: return {"channel", "query", "key"};
    case AttentionKind::kGlobal: return {"channel", "timepiece", "step"};
    case AttentionKind::kNone: break;
  }
  throw ContractError("model has no attention scores to export");
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

}  // namespace

AttentionExport export_attention(Model& model, const Trial& trial) {
  const NetworkSpec& spec = model.spec();
  if (trial.channels != spec.channels || trial.samples != spec.timepieces * spec.steps) {
    throw DimensionError("trial " + trial.ref.key() + " does not match the model extents");
  }
  auto axes = score_axes(spec.attention.kind);
  ForwardTrace trace;
  {
    NoGradScope no_grad;
    model.forward(make_batch({&trial}, spec.timepieces, spec.steps), Mode::kInfer, &trace);
  }
  AttentionExport e;
  Shape native(trace.attention_scores.shape().begin() + 1, trace.attention_scores.shape().end());
  e.scores = reshape(trace.attention_scores, native);

  std::ostringstream in;
  in << "channel";
  for (std::size_t i = 0; i < trial.samples; ++i) in << ',' << i;
  in << '\n';
  for (std::size_t c = 0; c < trial.channels; ++c) {
    in << c;
    for (std::size_t i = 0; i < trial.samples; ++i) in << ',' << num(trial.at(c, i));
    in << '\n';
  }
  e.input_csv = in.str();

  std::ostringstream raster;
  raster << "channel,timepiece,step,spike\n";
  if (trace.encoder_spikes.numel() != 0) {
    const Shape& s = trace.encoder_spikes.shape();
    auto d = trace.encoder_spikes.data();
    for (std::size_t c = 0; c < s[1]; ++c) {
      for (std::size_t p = 0; p < s[2]; ++p) {
        for (std::size_t t = 0; t < s[3]; ++t) {
          raster << c << ',' << p << ',' << t << ',' << (d[(c * s[2] + p) * s[3] + t] != 0.0F ? 1 : 0) << '\n';
        }
      }
    }
  }
  e.raster_csv = raster.str();

  auto sd = e.scores.data();
  auto [lo, hi] = std::minmax_element(sd.begin(), sd.end());
  const double span = static_cast<double>(*hi) - static_cast<double>(*lo);
  std::ostringstream att;
  for (const auto& a : axes) att << a << ',';
  att << "raw,normalized\n";
  std::vector<std::size_t> idx(native.size(), 0);
  for (std::size_t i = 0; i < sd.size(); ++i) {
    for (std::size_t k = 0; k < idx.size(); ++k) att << idx[k] << ',';
    double norm = span > 0.0 ? (static_cast<double>(sd[i]) - *lo) / span : 0.0;
    att << num(sd[i]) << ',' << num(norm) << '\n';
    for (std::size_t k = idx.size(); k-- > 0;) {
      if (++idx[k] < native[k]) break;
      idx[k] = 0;
    }
  }
  e.attention_csv = att.str();

  std::ostringstream mean;
  mean << "sample,mean\n";
  for (std::size_t i = 0; i < trial.samples; ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < trial.channels; ++c) s += trial.at(c, i);
    mean << i << ',' << num(s / static_cast<double>(trial.channels)) << '\n';
  }
  e.channel_mean_csv = mean.str();
  return e;
}

void write_attention_export(const std::filesystem::path& dir, const AttentionExport& e) {
  std::filesystem::create_directories(dir);
  write_file(dir / "input.csv", e.input_csv);
  write_file(dir / "raster.csv", e.raster_csv);
  write_file(dir / "attention.csv", e.attention_csv);
  write_file(dir / "channel_mean.csv", e.channel_mean_csv);
}

std::vector<double> score_window_coverage(const NetworkSpec& spec, const Shape& score_shape, std::size_t begin,
                                          std::size_t end) {
  const std::size_t t = spec.steps;
  auto covered = [&](std::size_t lo, std::size_t hi) {
    std::size_t a = std::max(lo, begin), b = std::min(hi, end);
    return b > a ? static_cast<double>(b - a) : 0.0;
  };
  std::size_t n = shape_numel(score_shape);
  std::vector<double> cov(n, 0.0);
  if (score_shape.empty()) return cov;
  const std::size_t last = score_shape.back();
  if (spec.attention.kind == AttentionKind::kGlobal) {
    if (score_shape.size() < 2) throw DimensionError("global scores need row and column axes");
    const std::size_t rows = score_shape[score_shape.size() - 2];
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t col = i % last, row = (i / last) % rows;
      double in = 0.0;
      for (std::size_t a = 0; a < 2; ++a) {
        std::size_t s0 = (2 * row + a) * t + 2 * col;
        in += covered(s0, s0 + 2);
      }
      cov[i] = in / 4.0;
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t key = i % last;
      cov[i] = covered(2 * key * t, (2 * key + 2) * t) / static_cast<double>(2 * t);
    }
  }
  return cov;
}

double window_score_ratio(const NetworkSpec& spec, const Tensor& scores, std::size_t begin, std::size_t end) {
  auto cov = score_window_coverage(spec, scores.shape(), begin, end);
  auto d = scores.data();
  double in = 0.0, in_w = 0.0, out = 0.0, out_w = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    in += cov[i] * d[i];
    in_w += cov[i];
    out += (1.0 - cov[i]) * d[i];
    out_w += 1.0 - cov[i];
  }
  if (in_w == 0.0 || out_w == 0.0 || out == 0.0) throw ContractError("window does not split the score cells");
  return (in / in_w) / (out / out_w);
}

}  // namespace nisnn
