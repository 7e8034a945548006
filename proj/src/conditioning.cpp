#include "nldf/conditioning.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace nldf::cond {

SignalKind parse_signal_kind(const std::string& name) {
  if (name == "sinusoid-mixture") return SignalKind::kSinusoidMixture;
  if (name == "bandlimited-noise") return SignalKind::kBandlimitedNoise;
  throw ConfigError("unknown signal kind '" + name + "'");
}

DrivingSignal generate_signal(SignalKind kind, int frames, int raw_dim, std::uint64_t seed,
                              double fps) {
  if (frames < 1) throw ConfigError("generate_signal requires T >= 1");
  if (raw_dim < 1) throw ConfigError("generate_signal requires D_raw >= 1");
  if (!(fps > 0.0)) throw ConfigError("generate_signal requires fps > 0");

  const int components = kind == SignalKind::kSinusoidMixture ? 3 : 8;
  constexpr double kTwoPi = 6.283185307179586476925286766559;

  Rng rng(seed);
  std::vector<double> freqs(static_cast<size_t>(raw_dim) * components);
  std::vector<double> phases(freqs.size());
  for (size_t i = 0; i < freqs.size(); ++i) {
    freqs[i] = rng.uniform(0.2, kMaxSignalHz);
    phases[i] = rng.uniform(0.0, kTwoPi);
  }

  DrivingSignal signal;
  signal.fps = fps;
  signal.frames.resize(frames, raw_dim);
  for (int t = 0; t < frames; ++t) {
    const double seconds = static_cast<double>(t) / fps;
    for (int c = 0; c < raw_dim; ++c) {
      double acc = 0.0;
      for (int h = 0; h < components; ++h) {
        const size_t i = static_cast<size_t>(c) * components + h;
        acc += std::sin(kTwoPi * freqs[i] * seconds + phases[i]);
      }
      signal.frames(t, c) = acc / components;
    }
  }
  return signal;
}

void save_signal_csv(const DrivingSignal& signal, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DomainError("cannot open " + path.string() + " for writing");
  out << "# fps " << signal.fps << "\n";
  char buf[64];
  for (int t = 0; t < signal.frame_count(); ++t) {
    for (int c = 0; c < signal.raw_dim(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", signal.frames(t, c));
      out << (c ? "," : "") << buf;
    }
    out << "\n";
  }
}

DrivingSignal load_signal_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open " + path.string());
  DrivingSignal signal;
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream header(line.substr(1));
      std::string key;
      header >> key;
      if (key == "fps") header >> signal.fps;
      continue;
    }
    std::vector<double> row;
    std::istringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (!rows.empty() && row.size() != rows.front().size())
      throw DomainError(path.string() + ": ragged csv row");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DomainError(path.string() + ": empty signal");
  signal.frames.resize(static_cast<int>(rows.size()), static_cast<int>(rows.front().size()));
  for (size_t t = 0; t < rows.size(); ++t)
    for (size_t c = 0; c < rows[t].size(); ++c)
      signal.frames(static_cast<int>(t), static_cast<int>(c)) = rows[t][c];
  return signal;
}

Eigen::MatrixXd signal_window(const DrivingSignal& signal, int frame, int half_width) {
  if (frame < 0 || frame >= signal.frame_count())
    throw DomainError("signal_window: frame index out of range");
  if (half_width < 0) throw ConfigError("signal_window: half width must be >= 0");
  Eigen::MatrixXd window(2 * half_width + 1, signal.raw_dim());
  for (int j = -half_width; j <= half_width; ++j) {
    const int src = std::clamp(frame + j, 0, signal.frame_count() - 1);
    window.row(j + half_width) = signal.frames.row(src);
  }
  return window;
}

}  // namespace nldf::cond
