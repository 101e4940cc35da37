#include "stamping/signals.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "stamping/error.hpp"

namespace stamping::signals {

std::string_view to_string(Label label) {
  switch (label) {
    case Label::Normal:
      return "normal";
    case Label::Anomaly:
      return "anomaly";
    case Label::Unlabeled:
      return "unlabeled";
  }
  return "unlabeled";
}

Label parse_label(std::string_view text) {
  if (text == "normal") return Label::Normal;
  if (text == "anomaly") return Label::Anomaly;
  if (text == "unlabeled" || text.empty()) return Label::Unlabeled;
  throw ValidationError("unknown label '" + std::string(text) + "'");
}

void StrokeSignal::validate() const {
  if (samples.size() < 2) throw ValidationError("stroke '" + stroke_id + "' has fewer than 2 samples");
  if (!(sample_rate_hz > 0.0) || !std::isfinite(sample_rate_hz))
    throw ValidationError("stroke '" + stroke_id + "' has a non-positive sample rate");
  for (double v : samples)
    if (!std::isfinite(v)) throw ValidationError("stroke '" + stroke_id + "' contains a non-finite sample");
}

void GeneratorParams::validate() const {
  if (!(sample_rate_hz > 0.0)) throw ValidationError("generator sample rate must be positive");
  if (n_samples_min < 2 || n_samples_max < n_samples_min)
    throw ValidationError("generator sample-count range is invalid");
  const double nyquist = sample_rate_hz / 2.0;
  for (const auto& band : band_bursts) {
    if (!(band.low_hz > 0.0 && band.low_hz < band.high_hz && band.high_hz < nyquist))
      throw ValidationError("band burst edges must satisfy 0 < low < high < Nyquist");
    if (band.relative_amplitude < 0.0) throw ValidationError("band amplitude must be non-negative");
  }
  for (std::size_t i = 1; i < band_bursts.size(); ++i)
    if (!(band_bursts[i].low_hz >= band_bursts[i - 1].high_hz))
      throw ValidationError("band bursts must be ordered and non-overlapping");
  for (double d : stage_durations_ms)
    if (!(d > 0.0)) throw ValidationError("stage durations must be positive");
  if (noise_floor_rms < 0.0 || hum_amplitude < 0.0 || peak_amplitude < 0.0)
    throw ValidationError("amplitudes must be non-negative");
  if (!(hum_low_hz > 0.0 && hum_low_hz <= hum_high_hz && hum_high_hz < nyquist))
    throw ValidationError("hum band is invalid");
  if (duration_jitter < 0.0 || duration_jitter >= 0.2 || amplitude_jitter < 0.0 || amplitude_jitter >= 0.2)
    throw ValidationError("jitter must lie in [0, 0.2)");
  const auto& shift = anomaly_shift;
  if (!(shift.s2_advance_ms > 0.0)) throw ValidationError("s2_advance_ms must be positive");
  if (!(shift.s2_peak_scale > 0.0 && shift.s2_peak_scale < 1.0)) throw ValidationError("s2_peak_scale must lie in (0,1)");
  if (!(shift.s2_stretch >= 1.0)) throw ValidationError("s2_stretch must be >= 1");
  if (shift.s2_advance_ms >= 0.5 * stage_durations_ms[0])
    throw ValidationError("s2_advance_ms must be shorter than half of S1");

  // Worst case: every stage at its jitter cap plus the anomaly stretch.
  double worst = 0.0;
  for (double d : stage_durations_ms) worst += d * (1.0 + 4.0 * duration_jitter);
  worst += stage_durations_ms[1] * (1.0 + 4.0 * duration_jitter) * (shift.s2_stretch - 1.0);
  const double cycle_ms = 1000.0 * static_cast<double>(n_samples_min) / sample_rate_hz;
  if (!(worst < cycle_ms)) throw ValidationError("stage durations do not fit inside the shortest cycle");
}

void StrokeDataset::validate() const {
  for (const auto& s : strokes) s.validate();
  for (std::size_t i = 1; i < strokes.size(); ++i)
    if (strokes[i].sample_rate_hz != strokes[0].sample_rate_hz)
      throw ConsistencyError("stroke '" + strokes[i].stroke_id + "' sample rate differs from '" +
                             strokes[0].stroke_id + "'");
}

std::size_t StrokeDataset::count(Label label) const {
  return static_cast<std::size_t>(
      std::count_if(strokes.begin(), strokes.end(), [label](const StrokeSignal& s) { return s.label == label; }));
}

StrokeDataset StrokeDataset::subset(const std::vector<std::size_t>& indices) const {
  StrokeDataset out;
  out.provenance = provenance;
  out.strokes.reserve(indices.size());
  for (std::size_t i : indices) out.strokes.push_back(strokes.at(i));
  return out;
}

// ---------------------------------------------------------------------------
// File formats

FileFormat format_from_path(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".csv" ? FileFormat::Csv : FileFormat::Binary;
}

namespace {

constexpr std::string_view kCsvHeader = "stroke_id,label,sample_rate_hz,n_samples";
constexpr std::string_view kMagic = "STMP1";

void append_number(std::string& out, double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, ptr);
}

double parse_double(std::string_view text, std::size_t row, const char* what) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    throw ParseError(std::string("non-numeric ") + what + " '" + std::string(text) + "'", row);
  return v;
}

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    auto pos = text.find(sep, start);
    parts.push_back(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

StrokeDataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string(), 0);
  StrokeDataset ds;
  ds.provenance = FileSource{path};
  std::string line;
  std::size_t row = 0;
  if (!std::getline(in, line)) throw ParseError("empty file " + path.string(), 0);
  ++row;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader && line != std::string(kCsvHeader) + ",samples")
    throw ParseError("unexpected header '" + line + "'", row);
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split(line, ',');
    if (fields.size() != 5) throw ParseError("expected 5 fields, found " + std::to_string(fields.size()), row);
    StrokeSignal s;
    s.stroke_id = std::string(fields[0]);
    try {
      s.label = parse_label(fields[1]);
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), row);
    }
    s.sample_rate_hz = parse_double(fields[2], row, "sample rate");
    const double declared = parse_double(fields[3], row, "sample count");
    auto values = split(fields[4], ';');
    s.samples.reserve(values.size());
    for (auto v : values) s.samples.push_back(parse_double(v, row, "sample"));
    if (declared != static_cast<double>(s.samples.size()))
      throw ParseError("n_samples says " + std::string(fields[3]) + " but row holds " +
                           std::to_string(s.samples.size()),
                       row);
    try {
      s.validate();
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), row);
    }
    ds.strokes.push_back(std::move(s));
  }
  ds.validate();
  return ds;
}

void write_csv(const StrokeDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << kCsvHeader << '\n';
  std::string line;
  for (const auto& s : ds.strokes) {
    if (s.stroke_id.find_first_of(",;\n\r") != std::string::npos)
      throw ValidationError("stroke id '" + s.stroke_id + "' cannot be written to CSV");
    line.clear();
    line += s.stroke_id;
    line += ',';
    line += to_string(s.label);
    line += ',';
    append_number(line, s.sample_rate_hz);
    line += ',';
    line += std::to_string(s.samples.size());
    line += ',';
    for (std::size_t i = 0; i < s.samples.size(); ++i) {
      if (i) line += ';';
      append_number(line, s.samples[i]);
    }
    line += '\n';
    out << line;
  }
  if (!out) throw Error("failed writing " + path.string());
}

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_f64(std::string& buf, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class ByteReader {
 public:
  explicit ByteReader(std::string data) : data_(std::move(data)) {}
  bool done() const { return pos_ == data_.size(); }
  std::uint64_t uint(int bytes, std::size_t row) {
    need(static_cast<std::size_t>(bytes), row);
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(bytes);
    return v;
  }
  double f64(std::size_t row) { return std::bit_cast<double>(uint(8, row)); }
  std::string bytes(std::size_t n, std::size_t row) {
    need(n, row);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n, std::size_t row) const {
    if (data_.size() - pos_ < n) throw ParseError("truncated binary record", row);
  }
  std::string data_;
  std::size_t pos_ = 0;
};

StrokeDataset load_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string(), 0);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  ByteReader rd(std::move(data));
  if (rd.bytes(kMagic.size(), 0) != kMagic) throw ParseError("bad magic, expected STMP1", 0);
  const double rate = rd.f64(0);
  StrokeDataset ds;
  ds.provenance = FileSource{path};
  std::size_t row = 0;
  while (!rd.done()) {
    ++row;
    StrokeSignal s;
    const auto id_len = rd.uint(4, row);
    s.stroke_id = rd.bytes(id_len, row);
    const auto label = rd.uint(1, row);
    if (label > 2) throw ParseError("bad label byte " + std::to_string(label), row);
    s.label = static_cast<Label>(label);
    s.sample_rate_hz = rate;
    const auto count = rd.uint(4, row);
    s.samples.resize(count);
    for (auto& v : s.samples) v = rd.f64(row);
    try {
      s.validate();
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), row);
    }
    ds.strokes.push_back(std::move(s));
  }
  return ds;
}

void write_binary(const StrokeDataset& ds, const std::filesystem::path& path) {
  ds.validate();
  std::string buf(kMagic);
  put_f64(buf, ds.strokes.empty() ? 0.0 : ds.strokes.front().sample_rate_hz);
  for (const auto& s : ds.strokes) {
    put_u32(buf, static_cast<std::uint32_t>(s.stroke_id.size()));
    buf += s.stroke_id;
    buf.push_back(static_cast<char>(s.label));
    put_u32(buf, static_cast<std::uint32_t>(s.samples.size()));
    for (double v : s.samples) put_f64(buf, v);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error("failed writing " + path.string());
}

}  // namespace

StrokeDataset load_dataset(const std::filesystem::path& path, FileFormat format) {
  return format == FileFormat::Csv ? load_csv(path) : load_binary(path);
}

void write_dataset(const StrokeDataset& dataset, const std::filesystem::path& path, FileFormat format) {
  if (format == FileFormat::Csv)
    write_csv(dataset, path);
  else
    write_binary(dataset, path);
}

// ---------------------------------------------------------------------------
// Generator

namespace {

// Envelope levels relative to the stroke gain. S2 is a small burst, S3/S4
// grow towards the fracture impulse at D, S5/S6 decay and S7 is idle.
constexpr double kS2Level = 0.18;
constexpr double kS2Tail = 0.55;  // S2 level at B relative to its plateau
constexpr double kAttackMs = 0.3;
constexpr double kS3Start = 0.32, kS3End = 0.42;
constexpr double kS4Start = 0.58, kS4Knee = 0.72;
constexpr double kImpulseRiseMs = 0.8;
constexpr double kImpulseFallMs = 0.5;
constexpr double kS5Start = 0.70, kS5End = 0.56;
constexpr double kS6Start = 0.30, kS6End = 0.12;

double lerp(double a, double b, double t) { return a + (b - a) * t; }

struct Envelope {
  std::array<double, 6> at{};  // A..F in ms
  double s2_level = 0.0;

  double operator()(double t) const {
    const double a = at[0], b = at[1], c = at[2], d = at[3], e = at[4], f = at[5];
    if (t < a || t >= f) return 0.0;
    if (t < b) {
      const double attack_end = std::min(a + kAttackMs, b);
      if (t < attack_end) return s2_level * (t - a) / (attack_end - a);
      return lerp(s2_level, kS2Tail * s2_level, (t - attack_end) / (b - attack_end));
    }
    if (t < c) return lerp(kS3Start, kS3End, (t - b) / (c - b));
    if (t < d) {
      const double knee = d - kImpulseRiseMs;
      if (t < knee) return lerp(kS4Start, kS4Knee, (t - c) / (knee - c));
      return lerp(kS4Knee, 1.0, (t - knee) / kImpulseRiseMs);
    }
    if (t < e) {
      const double settle = d + kImpulseFallMs;
      if (t < settle) return lerp(1.0, kS5Start, (t - d) / kImpulseFallMs);
      return lerp(kS5Start, kS5End, (t - settle) / (e - settle));
    }
    return lerp(kS6Start, kS6End, (t - e) / (f - e));
  }
};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

StrokeSignal synthesize_stroke(const GeneratorParams& params, Label label, std::uint64_t seed) {
  params.validate();
  if (label == Label::Unlabeled) throw ValidationError("synthetic strokes must be normal or anomaly");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto jittered = [&](double nominal, double rel) {
    const double z = std::clamp(gauss(rng), -4.0, 4.0);
    return nominal * (1.0 + rel * z);
  };

  const std::size_t n = params.n_samples_min + static_cast<std::size_t>(std::floor(
                                                   unit(rng) * static_cast<double>(params.n_samples_max -
                                                                                   params.n_samples_min + 1)));
  std::array<double, 6> dur{};
  for (std::size_t i = 0; i < dur.size(); ++i) dur[i] = jittered(params.stage_durations_ms[i], params.duration_jitter);
  const double gain = jittered(params.peak_amplitude, params.amplitude_jitter);
  double s2_level = jittered(kS2Level, params.amplitude_jitter);

  struct Tone {
    double freq, phase, amp;
  };
  std::vector<Tone> tones;
  for (const auto& band : params.band_bursts) {
    const double quarter = 0.25 * (band.high_hz - band.low_hz);
    const double f = band.low_hz + quarter + unit(rng) * 2.0 * quarter;
    tones.push_back({f, 2.0 * std::numbers::pi * unit(rng), band.relative_amplitude});
  }
  const double hum_f = params.hum_low_hz + unit(rng) * (params.hum_high_hz - params.hum_low_hz);
  const double hum_phase = 2.0 * std::numbers::pi * unit(rng);

  double a_ms = dur[0];
  double s2_ms = dur[1];
  if (label == Label::Anomaly) {
    a_ms -= params.anomaly_shift.s2_advance_ms;
    s2_ms *= params.anomaly_shift.s2_stretch;
    s2_level *= params.anomaly_shift.s2_peak_scale;
  }
  Envelope env;
  env.s2_level = s2_level;
  env.at[0] = a_ms;
  env.at[1] = a_ms + s2_ms;
  for (std::size_t k = 2; k < 6; ++k) env.at[k] = env.at[k - 1] + dur[k];

  StrokeSignal s;
  s.stroke_id = "syn-" + std::to_string(seed);
  s.sample_rate_hz = params.sample_rate_hz;
  s.label = label;
  s.samples.resize(n);
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t i = 0; i < n; ++i) {
    const double t_s = static_cast<double>(i) / params.sample_rate_hz;
    const double level = env(1000.0 * t_s);
    double x = params.hum_amplitude * std::sin(two_pi * hum_f * t_s + hum_phase);
    if (level > 0.0) {
      double carrier = 0.0;
      for (const auto& tone : tones) carrier += tone.amp * std::sin(two_pi * tone.freq * t_s + tone.phase);
      x += gain * level * carrier;
    }
    if (params.noise_floor_rms > 0.0) x += params.noise_floor_rms * gauss(rng);
    s.samples[i] = x;
  }
  s.ground_truth = GroundTruth{env.at, s2_level, s2_ms};
  return s;
}

StrokeDataset synthesize_dataset(const GeneratorParams& params, std::size_t n_normal, std::size_t n_anomaly,
                                 std::uint64_t seed) {
  params.validate();
  std::vector<Label> labels(n_normal, Label::Normal);
  labels.insert(labels.end(), n_anomaly, Label::Anomaly);
  std::mt19937_64 rng(seed);
  std::shuffle(labels.begin(), labels.end(), rng);

  StrokeDataset ds;
  ds.provenance = SyntheticSource{seed, params};
  ds.strokes.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto s = synthesize_stroke(params, labels[i], splitmix64(seed ^ splitmix64(i + 1)));
    char id[32];
    std::snprintf(id, sizeof id, "stroke-%05zu", i);
    s.stroke_id = id;
    ds.strokes.push_back(std::move(s));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Splitting

void SplitSpec::validate() const {
  if (!(train_fraction > 0.0 && test_fraction > 0.0 && train_fraction + test_fraction <= 1.0 + 1e-12))
    throw ValidationError("split fractions must be positive and sum to at most 1");
  if (!(subsample_target_ratio >= 1.0)) throw ValidationError("subsample target ratio must be >= 1");
}

namespace {

std::vector<std::size_t> indices_with(const StrokeDataset& ds, Label label) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < ds.strokes.size(); ++i)
    if (ds.strokes[i].label == label) out.push_back(i);
  return out;
}

}  // namespace

std::vector<std::size_t> subsample_normals(const StrokeDataset& dataset, const std::vector<std::size_t>& pool,
                                           double ratio, std::uint64_t seed) {
  if (!(ratio >= 1.0)) throw ValidationError("subsample target ratio must be >= 1");
  std::vector<std::size_t> normals, out;
  for (std::size_t i : pool) {
    const auto label = dataset.strokes.at(i).label;
    if (label == Label::Anomaly)
      out.push_back(i);
    else if (label == Label::Normal)
      normals.push_back(i);
  }
  const auto keep = std::min(normals.size(), static_cast<std::size_t>(std::llround(ratio * static_cast<double>(out.size()))));
  std::mt19937_64 rng(splitmix64(seed ^ 0x5AB5A3B1EULL));
  std::shuffle(normals.begin(), normals.end(), rng);
  out.insert(out.end(), normals.begin(), normals.begin() + static_cast<std::ptrdiff_t>(keep));
  std::sort(out.begin(), out.end());
  return out;
}

DatasetSplit split_dataset(const StrokeDataset& dataset, const SplitSpec& spec) {
  spec.validate();
  auto normals = indices_with(dataset, Label::Normal);
  auto anomalies = indices_with(dataset, Label::Anomaly);
  if (normals.size() + anomalies.size() == 0) throw SplitError("dataset has no labeled strokes");
  std::mt19937_64 rng(spec.seed);
  std::shuffle(normals.begin(), normals.end(), rng);
  std::shuffle(anomalies.begin(), anomalies.end(), rng);

  DatasetSplit out;
  if (spec.mode == SplitMode::OneClass) {
    if (anomalies.size() < 2)
      throw SplitError("one-class split needs at least 2 anomalies (validation and test), found " +
                       std::to_string(anomalies.size()));
    const std::size_t n_train = spec.one_class_train_normals;
    if (normals.size() < n_train + 2)
      throw SplitError("one-class split needs at least " + std::to_string(n_train + 2) + " normals, found " +
                       std::to_string(normals.size()));
    const auto nt = static_cast<std::ptrdiff_t>(n_train);
    const auto half_normals = static_cast<std::ptrdiff_t>((normals.size() - n_train) / 2);
    const auto half_anomalies = static_cast<std::ptrdiff_t>(anomalies.size() / 2);
    out.train.assign(normals.begin(), normals.begin() + nt);
    out.validation.assign(normals.begin() + nt, normals.begin() + nt + half_normals);
    out.test.assign(normals.begin() + nt + half_normals, normals.end());
    out.validation.insert(out.validation.end(), anomalies.begin(), anomalies.begin() + half_anomalies);
    out.test.insert(out.test.end(), anomalies.begin() + half_anomalies, anomalies.end());
  } else {
    std::vector<std::size_t> pool;
    auto take = [&](const std::vector<std::size_t>& idx) {
      const auto n = static_cast<double>(idx.size());
      const auto n_train = std::min(idx.size(), static_cast<std::size_t>(std::llround(spec.train_fraction * n)));
      const auto n_test =
          std::min(idx.size() - n_train, static_cast<std::size_t>(std::llround(spec.test_fraction * n)));
      pool.insert(pool.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
      out.test.insert(out.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train),
                      idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_test));
      return std::pair{n_train, n_test};
    };
    take(normals);
    const auto [anom_train, anom_test] = take(anomalies);
    if (anom_train == 0 || anom_test == 0)
      throw SplitError("supervised split needs anomalies in both train and test, found " +
                       std::to_string(anomalies.size()));
    out.train = subsample_normals(dataset, pool, spec.subsample_target_ratio, spec.seed);
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.validation.begin(), out.validation.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

}  // namespace stamping::signals
