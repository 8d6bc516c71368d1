#include "svasr/features.hpp"

#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include <unsupported/Eigen/FFT>

#include "svasr/error.hpp"
#include "svasr/util.hpp"

namespace svasr {

void MfccConfig::validate() const {
  if (!(pre_emphasis >= 0.0 && pre_emphasis < 1.0)) throw DomainError("pre_emphasis must lie in [0, 1)");
  if (stride_samples <= 0 || stride_samples > window_samples || window_samples > dft_size)
    throw DomainError("need 0 < stride_samples <= window_samples <= dft_size");
  if (dft_size & (dft_size - 1)) throw DomainError("dft_size must be a power of two");
  if (n_cepstra <= 0 || n_cepstra >= n_filters) throw DomainError("need 0 < n_cepstra < n_filters");
  if (delta_window <= 0) throw DomainError("delta_window must be positive");
  if (!(log_floor > 0.0)) throw DomainError("log_floor must be positive");
}

Eigen::Index frame_count(std::size_t n_samples, const MfccConfig& cfg) {
  const auto window = static_cast<std::size_t>(cfg.window_samples);
  if (n_samples < window) return 0;
  return static_cast<Eigen::Index>((n_samples - window) / cfg.stride_samples + 1);
}

Eigen::MatrixXd frame_signal(const Eigen::VectorXd& samples, const MfccConfig& cfg) {
  const Eigen::Index n = frame_count(static_cast<std::size_t>(samples.size()), cfg);
  Eigen::MatrixXd frames(n, cfg.window_samples);
  for (Eigen::Index i = 0; i < n; ++i)
    frames.row(i) = samples.segment(i * cfg.stride_samples, cfg.window_samples).transpose();
  return frames;
}

Eigen::MatrixXd frame_signal(const Waveform& w, const MfccConfig& cfg) {
  Eigen::VectorXd samples(static_cast<Eigen::Index>(w.size()));
  for (Eigen::Index i = 0; i < samples.size(); ++i) samples[i] = w.samples[std::size_t(i)];
  return frame_signal(samples, cfg);
}

Eigen::VectorXd pre_emphasize(const Eigen::VectorXd& frame, double k) {
  Eigen::VectorXd out(frame.size());
  if (frame.size() == 0) return out;
  out[0] = frame[0] * (1.0 - k);
  out.tail(frame.size() - 1) = frame.tail(frame.size() - 1) - k * frame.head(frame.size() - 1);
  return out;
}

Eigen::VectorXd hamming_window(int length) {
  Eigen::VectorXd w(length);
  if (length == 1) {
    w[0] = 1.0;
    return w;
  }
  for (int n = 0; n < length; ++n)
    w[n] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * n / (length - 1));
  return w;
}

namespace {

double mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

}  // namespace

Eigen::MatrixXd mel_filterbank(const MfccConfig& cfg, int sample_rate_hz) {
  const int n_bins = cfg.dft_size / 2 + 1;
  const double mel_hi = mel(sample_rate_hz / 2.0);
  const double spacing = mel_hi / (cfg.n_filters + 1);
  Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(cfg.n_filters, n_bins);
  // DC is excluded, as in HTK.
  for (int b = 1; b < n_bins; ++b) {
    const double m = mel(double(b) * sample_rate_hz / cfg.dft_size);
    for (int j = 0; j < cfg.n_filters; ++j) {
      const double lo = spacing * j, centre = spacing * (j + 1), hi = spacing * (j + 2);
      if (m > lo && m < hi) fb(j, b) = m <= centre ? (m - lo) / spacing : (hi - m) / spacing;
    }
  }
  return fb;
}

Eigen::MatrixXd dct_matrix(int n_in, int n_out) {
  Eigen::MatrixXd d(n_out, n_in);
  const double scale = std::sqrt(2.0 / n_in);
  for (int k = 0; k < n_out; ++k)
    for (int j = 1; j <= n_in; ++j) d(k, j - 1) = scale * std::cos(std::numbers::pi * k * (j - 0.5) / n_in);
  return d;
}

FeatureSequence compute_static_mfcc(const Eigen::VectorXd& samples, const MfccConfig& cfg,
                                    int sample_rate_hz) {
  cfg.validate();
  const Eigen::MatrixXd frames = frame_signal(samples, cfg);
  if (frames.rows() == 0) throw DomainError("waveform shorter than one analysis window");

  const Eigen::VectorXd window = hamming_window(cfg.window_samples);
  const Eigen::MatrixXd fb = mel_filterbank(cfg, sample_rate_hz);
  const Eigen::MatrixXd dct = dct_matrix(cfg.n_filters, cfg.n_cepstra + 1);
  const int n_bins = cfg.dft_size / 2 + 1;
  const int dim = cfg.n_cepstra + (cfg.include_c0 ? 1 : 0);

  FeatureSequence out;
  out.frames.resize(dim, frames.rows());
  out.frame_period_100ns = static_cast<std::int32_t>(
      std::lround(1e7 * cfg.stride_samples / double(sample_rate_hz)));
  out.kind = cfg.include_c0 ? param_kind::mfcc | param_kind::zeroth : param_kind::mfcc;

  Eigen::FFT<double> fft;
  std::vector<double> padded(std::size_t(cfg.dft_size), 0.0);
  std::vector<std::complex<double>> spectrum;
  Eigen::VectorXd magnitude(n_bins);
  for (Eigen::Index t = 0; t < frames.rows(); ++t) {
    const Eigen::VectorXd x =
        pre_emphasize(frames.row(t).transpose(), cfg.pre_emphasis).cwiseProduct(window);
    std::copy(x.data(), x.data() + x.size(), padded.begin());
    fft.fwd(spectrum, padded);
    for (int b = 0; b < n_bins; ++b) magnitude[b] = std::abs(spectrum[std::size_t(b)]);
    const Eigen::VectorXd log_energy =
        (fb * magnitude).unaryExpr([&](double e) { return std::log(std::max(e, cfg.log_floor)); });
    const Eigen::VectorXd cep = dct * log_energy;
    out.frames.col(t).head(cfg.n_cepstra) = cep.tail(cfg.n_cepstra);
    if (cfg.include_c0) out.frames(dim - 1, t) = cep[0];
  }
  return out;
}

FeatureSequence compute_static_mfcc(const Waveform& w, const MfccConfig& cfg) {
  Eigen::VectorXd samples(static_cast<Eigen::Index>(w.size()));
  for (Eigen::Index i = 0; i < samples.size(); ++i) samples[i] = w.samples[std::size_t(i)];
  return compute_static_mfcc(samples, cfg, w.sample_rate_hz);
}

namespace {

Eigen::MatrixXd regression(const Eigen::MatrixXd& c, int window) {
  const Eigen::Index n = c.cols();
  double denom = 0.0;
  for (int th = 1; th <= window; ++th) denom += double(th) * th;
  denom *= 2.0;
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(c.rows(), n);
  for (Eigen::Index t = 0; t < n; ++t) {
    for (int th = 1; th <= window; ++th) {
      const Eigen::Index ahead = std::min<Eigen::Index>(t + th, n - 1);
      const Eigen::Index behind = std::max<Eigen::Index>(t - th, 0);
      d.col(t) += th * (c.col(ahead) - c.col(behind));
    }
    d.col(t) /= denom;
  }
  return d;
}

}  // namespace

FeatureSequence append_deltas(const FeatureSequence& seq, int delta_window) {
  if (seq.empty()) throw DomainError("cannot append deltas to an empty sequence");
  if (delta_window <= 0) throw DomainError("delta_window must be positive");
  const Eigen::MatrixXd delta = regression(seq.frames, delta_window);
  const Eigen::MatrixXd accel = regression(delta, delta_window);
  FeatureSequence out;
  out.frame_period_100ns = seq.frame_period_100ns;
  out.kind = seq.kind | param_kind::delta | param_kind::accel;
  out.frames.resize(3 * seq.dim(), seq.size());
  out.frames << seq.frames, delta, accel;
  return out;
}

FeatureSequence extract_features(const Waveform& w, const MfccConfig& cfg) {
  return append_deltas(compute_static_mfcc(w, cfg), cfg.delta_window);
}

// ---------------------------------------------------------------------------

PcaModel fit_pca(std::span<const FeatureSequence> sequences, Eigen::Index k) {
  if (sequences.empty()) throw DomainError("PCA needs at least two frames");
  const Eigen::Index dim = sequences.front().dim();
  Eigen::Index total = 0;
  for (const auto& s : sequences) {
    if (s.dim() != dim) throw DomainError("PCA input sequences differ in dimension");
    total += s.size();
  }
  if (total < 2) throw DomainError("PCA needs at least two frames");
  if (k <= 0 || k > dim) throw DomainError("PCA component count must lie in [1, dim]");

  Eigen::MatrixXd data(dim, total);
  Eigen::Index col = 0;
  for (const auto& s : sequences) {
    data.middleCols(col, s.size()) = s.frames;
    col += s.size();
  }
  PcaModel model;
  model.mean = data.rowwise().mean();
  const Eigen::MatrixXd centred = data.colwise() - model.mean;
  const Eigen::MatrixXd cov = centred * centred.transpose() / double(total - 1);
  const double scale = 1.0 + model.mean.cwiseAbs().maxCoeff();
  if (cov.cwiseAbs().maxCoeff() <= 1e-24 * scale * scale)
    throw DomainError("PCA input has zero covariance");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw Error("PCA eigen-decomposition failed");
  // Eigen returns ascending eigenvalues.
  model.basis.resize(dim, k);
  model.eigenvalues.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    Eigen::VectorXd v = solver.eigenvectors().col(dim - 1 - i);
    for (Eigen::Index d = 0; d < dim; ++d) {
      if (std::abs(v[d]) > 1e-12) {
        if (v[d] < 0) v = -v;
        break;
      }
    }
    model.basis.col(i) = v;
    model.eigenvalues[i] = std::max(0.0, solver.eigenvalues()[dim - 1 - i]);
  }
  return model;
}

FeatureSequence transform_pca(const PcaModel& model, const FeatureSequence& seq) {
  if (seq.dim() != model.input_dim())
    throw DomainError("feature dimension " + std::to_string(seq.dim()) + " does not match PCA input " +
                      std::to_string(model.input_dim()));
  FeatureSequence out;
  out.frame_period_100ns = seq.frame_period_100ns;
  out.kind = param_kind::user;
  out.frames = model.basis.transpose() * (seq.frames.colwise() - model.mean);
  return out;
}

Eigen::MatrixXd reconstruct_pca(const PcaModel& model, const Eigen::MatrixXd& projected) {
  return (model.basis * projected).colwise() + model.mean;
}

void write_pca(const PcaModel& model, const std::filesystem::path& path) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "pca " << model.input_dim() << ' ' << model.output_dim() << '\n';
  out << "mean";
  for (double v : model.mean) out << ' ' << v;
  out << "\neigenvalues";
  for (double v : model.eigenvalues) out << ' ' << v;
  out << '\n';
  for (Eigen::Index i = 0; i < model.output_dim(); ++i) {
    out << "basis";
    for (Eigen::Index d = 0; d < model.input_dim(); ++d) out << ' ' << model.basis(d, i);
    out << '\n';
  }
  write_text_file(path, out.str());
}

PcaModel read_pca(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  auto fail = [&](const std::string& why) { return FormatError(path.string() + ": " + why); };
  std::string tag;
  Eigen::Index dim = 0, k = 0;
  if (!(in >> tag >> dim >> k) || tag != "pca" || dim <= 0 || k <= 0 || k > dim)
    throw fail("bad PCA header");
  PcaModel m;
  m.mean.resize(dim);
  m.eigenvalues.resize(k);
  m.basis.resize(dim, k);
  auto read_row = [&](const char* expected, auto&& dst, Eigen::Index n) {
    if (!(in >> tag) || tag != expected) throw fail(std::string("expected ") + expected);
    for (Eigen::Index i = 0; i < n; ++i)
      if (!(in >> dst[i])) throw fail(std::string("short ") + expected + " row");
  };
  read_row("mean", m.mean, dim);
  read_row("eigenvalues", m.eigenvalues, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    Eigen::VectorXd col(dim);
    read_row("basis", col, dim);
    m.basis.col(i) = col;
  }
  return m;
}

// ---------------------------------------------------------------------------

namespace {

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(std::uint8_t(v >> shift));
}
void put_be16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(std::uint8_t(v >> 8));
  out.push_back(std::uint8_t(v));
}
std::uint32_t get_be32(const std::uint8_t* p) {
  return std::uint32_t(p[0]) << 24 | std::uint32_t(p[1]) << 16 | std::uint32_t(p[2]) << 8 | p[3];
}
std::uint16_t get_be16(const std::uint8_t* p) { return std::uint16_t(p[0] << 8 | p[1]); }

}  // namespace

void write_param_file(const FeatureSequence& seq, const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(12 + std::size_t(seq.frames.size()) * 4);
  put_be32(bytes, static_cast<std::uint32_t>(seq.size()));
  put_be32(bytes, static_cast<std::uint32_t>(seq.frame_period_100ns));
  put_be16(bytes, static_cast<std::uint16_t>(seq.dim() * 4));
  put_be16(bytes, seq.kind);
  for (Eigen::Index t = 0; t < seq.size(); ++t) {
    for (Eigen::Index d = 0; d < seq.dim(); ++d) {
      const float f = static_cast<float>(seq.frames(d, t));
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      put_be32(bytes, bits);
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

FeatureSequence read_param_file(const std::filesystem::path& path) {
  const auto bytes = read_binary_file(path);
  if (bytes.size() < 12) throw FormatError(path.string() + ": truncated parameter header");
  const std::uint32_t n = get_be32(bytes.data());
  const std::uint32_t period = get_be32(bytes.data() + 4);
  const std::uint16_t samp_size = get_be16(bytes.data() + 8);
  const std::uint16_t kind = get_be16(bytes.data() + 10);
  if (samp_size == 0 || samp_size % 4 != 0)
    throw FormatError(path.string() + ": sample size " + std::to_string(samp_size) + " is not a float vector");
  if (bytes.size() - 12 != std::size_t(n) * samp_size)
    throw FormatError(path.string() + ": header declares " + std::to_string(n) +
                      " frames but payload size differs");
  FeatureSequence seq;
  seq.frame_period_100ns = static_cast<std::int32_t>(period);
  seq.kind = kind;
  const Eigen::Index dim = samp_size / 4;
  seq.frames.resize(dim, n);
  const std::uint8_t* p = bytes.data() + 12;
  for (Eigen::Index t = 0; t < Eigen::Index(n); ++t) {
    for (Eigen::Index d = 0; d < dim; ++d, p += 4) {
      const std::uint32_t bits = get_be32(p);
      float f;
      std::memcpy(&f, &bits, 4);
      seq.frames(d, t) = f;
    }
  }
  return seq;
}

void write_feature_text(const FeatureSequence& seq, const std::filesystem::path& path) {
  std::ostringstream out;
  out << std::setprecision(9);
  for (Eigen::Index t = 0; t < seq.size(); ++t) {
    for (Eigen::Index d = 0; d < seq.dim(); ++d) out << (d ? " " : "") << seq.frames(d, t);
    out << '\n';
  }
  write_text_file(path, out.str());
}

}  // namespace svasr
