#include "photonchain/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <sstream>

#include "photonchain/errors.hpp"

namespace photonchain::io {

namespace {

constexpr char kMagic[6] = {'I', 'P', 'T', 'R', 'C', '1'};
constexpr const char* kGridPrefix = "# grid ";

std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  return in;
}

template <typename T>
void put_le(std::ostream& out, T value) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  U bits = std::bit_cast<U>(value);
  unsigned char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

template <typename T>
T get_le(std::istream& in, const fs::path& path) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  unsigned char bytes[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U))) throw DataError("truncated trace file: " + path.string());
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(bytes[i]) << (8 * i);
  return std::bit_cast<T>(bits);
}

double grid_field(const std::string& line, const std::string& key, const fs::path& path) {
  const auto pos = line.find(key + "=");
  if (pos == std::string::npos) throw DataError("trace grid comment lacks " + key + ": " + path.string());
  const auto start = pos + key.size() + 1;
  const auto stop = line.find(' ', start);
  return parse_double(line.substr(start, stop == std::string::npos ? std::string::npos : stop - start));
}

}  // namespace

std::size_t Table::column(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw DataError("missing column: " + name);
  return static_cast<std::size_t>(it - columns.begin());
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  const char* first = s.data() + b;
  if (b < e && *first == '+') ++first;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(first, s.data() + e, v);
  if (ec != std::errc() || ptr != s.data() + e) throw DataError("not a number: '" + s + "'");
  return v;
}

void write_table(const fs::path& path, const Table& table) {
  auto out = open_out(path);
  for (std::size_t c = 0; c < table.columns.size(); ++c) out << (c ? "," : "") << table.columns[c];
  out << '\n';
  for (const auto& row : table.rows) {
    if (row.size() != table.columns.size()) throw DataError("table row width does not match header");
    for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << format_double(row[c]);
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

Table read_table(const fs::path& path) {
  auto in = open_in(path);
  Table table;
  std::string line;
  bool have_header = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty() || line.front() == '#') continue;
    auto fields = split(line);
    if (!have_header) {
      table.columns = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != table.columns.size()) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(table.columns.size()) + " fields");
    }
    std::vector<double> row;
    row.reserve(fields.size());
    for (const auto& f : fields) row.push_back(parse_double(f));
    table.rows.push_back(std::move(row));
  }
  if (!have_header) throw DataError("empty table: " + path.string());
  return table;
}

TraceFormat trace_format_from_string(const std::string& s) {
  if (s == "csv") return TraceFormat::csv;
  if (s == "binary") return TraceFormat::binary;
  throw DomainError("unknown trace format: " + s);
}

const char* to_string(TraceFormat f) noexcept { return f == TraceFormat::csv ? "csv" : "binary"; }

TraceFormat trace_format_for(const fs::path& path) {
  const auto ext = path.extension().string();
  return (ext == ".iptrc" || ext == ".bin") ? TraceFormat::binary : TraceFormat::csv;
}

TraceWriter::TraceWriter(const fs::path& path, const temporal::TraceGrid& grid, TraceFormat format)
    : path_(path), grid_(grid), format_(format) {
  if (format_ == TraceFormat::binary) {
    out_ = open_out(path_, std::ios::out | std::ios::binary);
    out_.write(kMagic, sizeof kMagic);
    put_le<std::uint32_t>(out_, 0);
    put_le<std::uint32_t>(out_, static_cast<std::uint32_t>(grid_.n_samples));
    put_le<double>(out_, grid_.dt_us);
  } else {
    out_ = open_out(path_);
    out_ << kGridPrefix << "dt_us=" << format_double(grid_.dt_us) << " n_samples=" << grid_.n_samples
         << " t0_us=" << format_double(grid_.t0_us) << '\n';
    for (std::size_t i = 0; i < grid_.n_samples; ++i) {
      out_ << (i ? "," : "") << "t=" << format_double(grid_.time(i)) << "[us]";
    }
    out_ << '\n';
  }
  if (!out_) throw IoError("write failed: " + path_.string());
}

TraceWriter::~TraceWriter() {
  try {
    close();
  } catch (...) {  // NOLINT(bugprone-empty-catch): destructors must not throw
  }
}

void TraceWriter::write(std::span<const double> trace) {
  if (closed_) throw IoError("trace writer already closed: " + path_.string());
  if (trace.size() != grid_.n_samples) throw DataError("trace length does not match the file grid");
  if (format_ == TraceFormat::binary) {
    for (double v : trace) put_le<double>(out_, v);
  } else {
    std::string line;
    line.reserve(trace.size() * 24);
    for (std::size_t i = 0; i < trace.size(); ++i) {
      if (i) line += ',';
      line += format_double(trace[i]);
    }
    out_ << line << '\n';
  }
  if (!out_) throw IoError("write failed: " + path_.string());
  ++rows_;
}

void TraceWriter::close() {
  if (closed_) return;
  closed_ = true;
  if (format_ == TraceFormat::binary) {
    out_.seekp(sizeof kMagic);
    put_le<std::uint32_t>(out_, static_cast<std::uint32_t>(rows_));
  }
  out_.close();
  if (!out_) throw IoError("write failed: " + path_.string());
}

TraceFileInfo read_trace_header(const fs::path& path, double binary_t0_us) {
  TraceFileInfo info;
  info.format = trace_format_for(path);
  if (info.format == TraceFormat::binary) {
    auto in = open_in(path, std::ios::in | std::ios::binary);
    char magic[sizeof kMagic];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
      throw DataError("not an IPTRC1 trace file: " + path.string());
    }
    info.n_trials = get_le<std::uint32_t>(in, path);
    const auto n_samples = get_le<std::uint32_t>(in, path);
    info.grid = temporal::TraceGrid(get_le<double>(in, path), n_samples, binary_t0_us);
    return info;
  }
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line) || line.rfind(kGridPrefix, 0) != 0) {
    throw DataError("trace CSV lacks the grid comment: " + path.string());
  }
  strip_cr(line);
  info.grid = temporal::TraceGrid(grid_field(line, "dt_us", path),
                                  static_cast<std::size_t>(grid_field(line, "n_samples", path)),
                                  grid_field(line, "t0_us", path));
  return info;
}

TraceFileInfo for_each_trace(const fs::path& path, const std::function<void(std::span<const double>)>& fn,
                             double binary_t0_us) {
  TraceFileInfo info;
  info.format = trace_format_for(path);
  if (info.format == TraceFormat::binary) {
    auto in = open_in(path, std::ios::in | std::ios::binary);
    char magic[sizeof kMagic];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
      throw DataError("not an IPTRC1 trace file: " + path.string());
    }
    info.n_trials = get_le<std::uint32_t>(in, path);
    const auto n_samples = get_le<std::uint32_t>(in, path);
    const double dt = get_le<double>(in, path);
    info.grid = temporal::TraceGrid(dt, n_samples, binary_t0_us);
    std::vector<double> row(n_samples);
    for (std::size_t r = 0; r < info.n_trials; ++r) {
      for (auto& v : row) v = get_le<double>(in, path);
      fn(row);
    }
    return info;
  }

  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line) || line.rfind(kGridPrefix, 0) != 0) {
    throw DataError("trace CSV lacks the grid comment: " + path.string());
  }
  strip_cr(line);
  info.grid = temporal::TraceGrid(grid_field(line, "dt_us", path),
                                  static_cast<std::size_t>(grid_field(line, "n_samples", path)),
                                  grid_field(line, "t0_us", path));
  if (!std::getline(in, line)) throw DataError("trace CSV lacks the time header: " + path.string());
  std::vector<double> row(info.grid.n_samples);
  while (std::getline(in, line)) {
    strip_cr(line);
    if (line.empty()) continue;
    const auto fields = split(line);
    if (fields.size() != row.size()) {
      throw DataError(path.string() + ": trace row " + std::to_string(info.n_trials) + " has " +
                      std::to_string(fields.size()) + " samples, grid has " + std::to_string(row.size()));
    }
    for (std::size_t i = 0; i < row.size(); ++i) row[i] = parse_double(fields[i]);
    fn(row);
    ++info.n_trials;
  }
  return info;
}

temporal::TraceMatrix read_traces(const fs::path& path, double binary_t0_us) {
  std::vector<std::vector<double>> rows;
  const auto info = for_each_trace(
      path, [&](std::span<const double> r) { rows.emplace_back(r.begin(), r.end()); }, binary_t0_us);
  temporal::TraceMatrix m(info.grid);
  for (const auto& r : rows) m.append(r);
  return m;
}

void write_traces(const fs::path& path, const temporal::TraceMatrix& traces, TraceFormat format) {
  TraceWriter w(path, traces.grid(), format);
  for (std::size_t r = 0; r < traces.rows(); ++r) w.write(traces.row(r));
  w.close();
}

namespace {
constexpr const char* kRawColumn = "quadrature[V*sqrt(us)]";
constexpr const char* kCalibratedColumn = "quadrature[quanta^(1/2)]";
}  // namespace

void write_quadratures(const fs::path& path, const tomography::QuadratureDataset& data) {
  Table t{{"index", data.calibrated ? kCalibratedColumn : kRawColumn}, {}};
  t.rows.reserve(data.values.size());
  for (std::size_t i = 0; i < data.values.size(); ++i) t.rows.push_back({static_cast<double>(i), data.values[i]});
  write_table(path, t);
}

tomography::QuadratureDataset read_quadratures(const fs::path& path) {
  const Table t = read_table(path);
  tomography::QuadratureDataset d;
  d.set_id = path.stem().string();
  std::size_t col = 0;
  if (std::find(t.columns.begin(), t.columns.end(), kCalibratedColumn) != t.columns.end()) {
    col = t.column(kCalibratedColumn);
    d.calibrated = true;
  } else {
    col = t.column(kRawColumn);
  }
  d.values.reserve(t.rows.size());
  for (const auto& r : t.rows) d.values.push_back(r[col]);
  return d;
}

void write_thermal_sweep(const fs::path& path, std::span<const characterization::ThermalSweepPoint> points) {
  Table t{{"gain[dB]", "temperature[mK]", "s_in[quanta]", "s_out[arb]"}, {}};
  for (const auto& p : points) t.rows.push_back({p.gain_db, p.temperature_mk, p.s_in, p.s_out});
  write_table(path, t);
}

std::vector<characterization::ThermalSweepPoint> read_thermal_sweep(const fs::path& path) {
  const Table t = read_table(path);
  const auto g = t.column("gain[dB]");
  const auto T = t.column("temperature[mK]");
  const auto si = t.column("s_in[quanta]");
  const auto so = t.column("s_out[arb]");
  std::vector<characterization::ThermalSweepPoint> out;
  for (const auto& r : t.rows) out.push_back({r[g], r[T], r[si], r[so]});
  return out;
}

void write_dephasing(const fs::path& path, std::span<const characterization::DephasingPoint> points) {
  Table t{{"gain[dB]", "gamma[kHz]", "sigma[kHz]"}, {}};
  for (const auto& p : points) t.rows.push_back({p.gain_db, p.gamma_khz, p.sigma_khz});
  write_table(path, t);
}

std::vector<characterization::DephasingPoint> read_dephasing(const fs::path& path) {
  const Table t = read_table(path);
  const auto g = t.column("gain[dB]");
  const auto gamma = t.column("gamma[kHz]");
  const auto s = t.column("sigma[kHz]");
  std::vector<characterization::DephasingPoint> out;
  for (const auto& r : t.rows) out.push_back({r[g], r[gamma], r[s]});
  return out;
}

void write_residuals(const fs::path& path, std::span<const characterization::Residual> residuals,
                     const std::string& x_column, const std::string& value_column) {
  Table t{{x_column, "observed_" + value_column, "model_" + value_column, "residual_" + value_column}, {}};
  for (const auto& r : residuals) t.rows.push_back({r.x, r.observed, r.model, r.observed - r.model});
  write_table(path, t);
}

void write_waveform(const fs::path& path, const temporal::TraceGrid& grid, std::span<const double> samples) {
  if (samples.size() != grid.n_samples) throw DataError("waveform length does not match grid");
  Table t{{"time[us]", "amplitude[us^(-1/2)]"}, {}};
  t.rows.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) t.rows.push_back({grid.time(i), samples[i]});
  write_table(path, t);
}

std::vector<double> read_waveform(const fs::path& path, temporal::TraceGrid& grid_out) {
  const Table t = read_table(path);
  if (t.rows.size() < 2) throw DataError("waveform needs at least two samples: " + path.string());
  const auto tc = t.column("time[us]");
  const auto ac = t.column("amplitude[us^(-1/2)]");
  const double t0 = -t.rows.front()[tc];
  const double dt = (t.rows.back()[tc] - t.rows.front()[tc]) / static_cast<double>(t.rows.size() - 1);
  grid_out = temporal::TraceGrid(dt, t.rows.size(), t0);
  std::vector<double> out;
  out.reserve(t.rows.size());
  for (const auto& r : t.rows) out.push_back(r[ac]);
  return out;
}

void write_histogram(const fs::path& path, const tomography::Histogram& histogram,
                     std::span<const double> model_density) {
  if (model_density.size() != histogram.bins()) throw DataError("model density length does not match bins");
  Table t{{"bin_center[quanta^(1/2)]", "density[quanta^(-1/2)]", "model_density[quanta^(-1/2)]"}, {}};
  for (std::size_t i = 0; i < histogram.bins(); ++i) {
    t.rows.push_back({histogram.center(i), histogram.density[i], model_density[i]});
  }
  write_table(path, t);
}

}  // namespace photonchain::io
