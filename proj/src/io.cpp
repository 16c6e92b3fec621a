#include <mvmom/io.hpp>

#include <mvmom/error.hpp>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string_view>

namespace mvmom::io {

std::string format_exact(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string format_short(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

namespace {

[[noreturn]] void parse_error(std::size_t line, const std::string& what) {
  fail(ErrorCode::kParseError, "line " + std::to_string(line) + ": " + what);
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t' && s[i] != '\r') ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

double parse_double(std::string_view tok, std::size_t line) {
  double value = 0.0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
    parse_error(line, "expected a number, got '" + std::string(tok) + "'");
  }
  return value;
}

long long parse_int(std::string_view tok, std::size_t line) {
  long long value = 0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
    parse_error(line, "expected an integer, got '" + std::string(tok) + "'");
  }
  return value;
}

std::string join_row(const Eigen::Ref<const Vector>& v) {
  std::string s;
  for (Index i = 0; i < v.size(); ++i) {
    if (i) s += ' ';
    s += format_exact(v(i));
  }
  return s;
}

void write_matrix(std::ostream& out, const Matrix& m) {
  for (Index i = 0; i < m.rows(); ++i) out << join_row(m.row(i).transpose()) << '\n';
}

// Generic "key: value" and "name:" + numeric-row blocks.
struct Block {
  std::string name;
  std::size_t line = 0;
  std::vector<std::vector<double>> rows;
};

struct BlockDocument {
  std::map<std::string, std::pair<std::string, std::size_t>> keys;
  std::vector<Block> blocks;
};

BlockDocument parse_blocks(std::istream& in) {
  BlockDocument doc;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (const auto colon = line.find(':'); colon != std::string_view::npos) {
      const std::string name(trim(line.substr(0, colon)));
      const std::string value(trim(line.substr(colon + 1)));
      if (value.empty()) {
        doc.blocks.push_back({name, line_no, {}});
      } else {
        doc.keys[name] = {value, line_no};
      }
      continue;
    }
    if (doc.blocks.empty()) parse_error(line_no, "numbers outside of any block");
    std::vector<double> row;
    for (auto tok : split_ws(line)) row.push_back(parse_double(tok, line_no));
    doc.blocks.back().rows.push_back(std::move(row));
  }
  return doc;
}

Matrix to_matrix(const Block& b) {
  if (b.rows.empty()) parse_error(b.line, "block '" + b.name + "' is empty");
  const std::size_t cols = b.rows.front().size();
  Matrix m(static_cast<Index>(b.rows.size()), static_cast<Index>(cols));
  for (std::size_t i = 0; i < b.rows.size(); ++i) {
    if (b.rows[i].size() != cols) parse_error(b.line + i + 1, "ragged rows in block '" + b.name + "'");
    for (std::size_t j = 0; j < cols; ++j) m(static_cast<Index>(i), static_cast<Index>(j)) = b.rows[i][j];
  }
  return m;
}

Vector to_vector(const Block& b) {
  const Matrix m = to_matrix(b);
  if (m.rows() != 1) parse_error(b.line, "block '" + b.name + "' must be a single row");
  return m.row(0).transpose();
}

std::vector<long long> block_indices(const Block& b, std::string_view prefix) {
  std::vector<long long> out;
  const auto toks = split_ws(std::string_view(b.name).substr(prefix.size()));
  for (auto t : toks) out.push_back(parse_int(t, b.line));
  return out;
}

bool starts_with(const std::string& s, std::string_view prefix) {
  return s.size() >= prefix.size() && std::string_view(s).substr(0, prefix.size()) == prefix;
}

}  // namespace

// ---------------------------------------------------------------------------
// Data files

void write_batch(std::ostream& out, const SampleBatch& batch) {
  std::string dims;
  bool uniform = true;
  for (Index v = 0; v < batch.num_views(); ++v) {
    if (batch.dim(v) != batch.dim(0)) uniform = false;
  }
  for (Index v = 0; v < (uniform ? std::min<Index>(1, batch.num_views()) : batch.num_views()); ++v) {
    if (v) dims += ',';
    dims += std::to_string(batch.dim(v));
  }
  out << "d=" << dims << " views=" << batch.num_views() << " onehot=" << (batch.is_one_hot() ? 1 : 0) << '\n';
  std::string line;
  for (Index n = 0; n < batch.size(); ++n) {
    line.clear();
    for (Index v = 0; v < batch.num_views(); ++v) {
      if (v) line += " | ";
      if (batch.is_one_hot()) {
        line += std::to_string(batch.tokens(v)[static_cast<std::size_t>(n)]);
      } else {
        line += join_row(batch.view(v).row(n).transpose());
      }
    }
    line += '\n';
    out << line;
  }
}

SampleBatch read_batch(std::istream& in) {
  std::string raw;
  std::size_t line_no = 0;
  if (!std::getline(in, raw)) parse_error(1, "missing header");
  ++line_no;
  std::vector<Index> dims;
  long long views = -1;
  int one_hot = -1;
  for (auto tok : split_ws(raw)) {
    const auto eq = tok.find('=');
    if (eq == std::string_view::npos) parse_error(line_no, "malformed header field '" + std::string(tok) + "'");
    const auto key = tok.substr(0, eq);
    const auto value = tok.substr(eq + 1);
    if (key == "d") {
      std::size_t start = 0;
      while (start <= value.size()) {
        const auto comma = value.find(',', start);
        const auto part = value.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
        dims.push_back(static_cast<Index>(parse_int(part, line_no)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
      }
    } else if (key == "views") {
      views = parse_int(value, line_no);
    } else if (key == "onehot") {
      one_hot = static_cast<int>(parse_int(value, line_no));
    } else {
      parse_error(line_no, "unknown header field '" + std::string(key) + "'");
    }
  }
  if (dims.empty() || views < 1 || (one_hot != 0 && one_hot != 1)) {
    parse_error(line_no, "header must be 'd=<d> views=<l> onehot=<0|1>'");
  }
  for (Index d : dims) {
    if (d < 1) parse_error(line_no, "dimensions must be positive");
  }
  if (dims.size() == 1) dims.assign(static_cast<std::size_t>(views), dims.front());
  if (static_cast<long long>(dims.size()) != views) parse_error(line_no, "dimension list does not match view count");

  const auto nv = static_cast<std::size_t>(views);
  std::vector<std::vector<std::int32_t>> tokens(one_hot ? nv : 0);
  std::vector<std::vector<double>> values(one_hot ? 0 : nv);
  Index rows = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = trim(raw);
    if (line.empty()) continue;
    std::size_t start = 0;
    for (std::size_t v = 0; v < nv; ++v) {
      const auto bar = line.find('|', start);
      if ((bar == std::string_view::npos) != (v + 1 == nv)) parse_error(line_no, "expected " + std::to_string(nv) + " views");
      const auto field = line.substr(start, bar == std::string_view::npos ? std::string_view::npos : bar - start);
      const auto toks = split_ws(field);
      if (one_hot) {
        if (toks.size() != 1) parse_error(line_no, "one-hot view " + std::to_string(v + 1) + " needs one token id");
        const long long t = parse_int(toks[0], line_no);
        if (t < 0 || t >= dims[v]) {
          parse_error(line_no, "token id " + std::to_string(t) + " outside [0, " + std::to_string(dims[v]) + ")");
        }
        tokens[v].push_back(static_cast<std::int32_t>(t));
      } else {
        if (static_cast<Index>(toks.size()) != dims[v]) {
          parse_error(line_no, "view " + std::to_string(v + 1) + " needs " + std::to_string(dims[v]) + " values");
        }
        for (auto t : toks) values[v].push_back(parse_double(t, line_no));
      }
      start = bar == std::string_view::npos ? line.size() : bar + 1;
    }
    ++rows;
  }
  if (one_hot) return SampleBatch::one_hot(std::move(tokens), std::move(dims));
  std::vector<RowMatrix> mats;
  for (std::size_t v = 0; v < nv; ++v) {
    mats.push_back(Eigen::Map<const RowMatrix>(values[v].data(), rows, dims[v]));
  }
  return SampleBatch::dense(std::move(mats));
}

SampleBatch ingest_corpus(std::istream& in, Index vocab, bool thirds, std::uint64_t seed, IngestStats* stats) {
  if (vocab < 1) fail(ErrorCode::kInvalidArgument, "vocabulary size must be positive");
  Rng rng(seed);
  std::vector<std::vector<std::int32_t>> tokens(3);
  IngestStats local;
  std::string raw;
  std::size_t line_no = 0;
  std::vector<std::int32_t> doc;
  while (std::getline(in, raw)) {
    ++line_no;
    doc.clear();
    for (auto tok : split_ws(raw)) {
      const long long t = parse_int(tok, line_no);
      if (t < 0 || t >= vocab) {
        parse_error(line_no, "token id " + std::to_string(t) + " outside [0, " + std::to_string(vocab) + ")");
      }
      doc.push_back(static_cast<std::int32_t>(t));
    }
    if (doc.empty() && trim(raw).empty()) continue;
    if (doc.size() < 3) {
      ++local.skipped_short;
      continue;
    }
    if (thirds) {
      const std::size_t len = doc.size();
      const std::size_t cuts[4] = {0, len / 3, 2 * len / 3, len};
      for (std::size_t v = 0; v < 3; ++v) {
        std::uniform_int_distribution<std::size_t> pick(cuts[v], cuts[v + 1] - 1);
        tokens[v].push_back(doc[pick(rng)]);
      }
    } else {
      for (std::size_t v = 0; v < 3; ++v) tokens[v].push_back(doc[v]);
    }
    ++local.documents;
  }
  if (stats) *stats = local;
  return SampleBatch::one_hot(std::move(tokens), {vocab, vocab, vocab});
}

// ---------------------------------------------------------------------------
// Model files

void write_model(std::ostream& out, const ModelFile& model) {
  if (model.mixture) {
    const auto& p = *model.mixture;
    out << "family: " << family_name(p.family) << '\n';
    Index k = p.weights.size();
    for (const auto& m : p.means) {
      if (k == 0) k = m.cols();
    }
    out << "k: " << k << '\n';
    out << "views: " << p.num_views() << '\n';
    if (p.weights.size()) out << "weights:\n" << join_row(p.weights) << '\n';
    for (Index v = 0; v < p.num_views(); ++v) {
      const Matrix& m = p.means[static_cast<std::size_t>(v)];
      if (m.size() == 0) continue;
      out << "view " << v + 1 << ":\n";
      write_matrix(out, m);
    }
    for (std::size_t v = 0; v < p.covariances.size(); ++v) {
      for (std::size_t j = 0; j < p.covariances[v].size(); ++j) {
        if (p.covariances[v][j].size() == 0) continue;
        out << "cov " << v + 1 << ' ' << j + 1 << ":\n";
        write_matrix(out, p.covariances[v][j]);
      }
    }
  } else if (model.hmm) {
    out << "family: hmm\n";
  }
  if (model.hmm) {
    const auto& h = *model.hmm;
    out << "noise: " << noise_name(h.noise) << '\n';
    out << "initial:\n" << join_row(h.initial) << '\n';
    out << "transition:\n";
    write_matrix(out, h.transition);
    out << "observation:\n";
    write_matrix(out, h.observation);
    for (std::size_t j = 0; j < h.state_covariances.size(); ++j) {
      out << "cov " << j + 1 << ":\n";
      write_matrix(out, h.state_covariances[j]);
    }
  }
}

ModelFile read_model(std::istream& in) {
  const auto doc = parse_blocks(in);
  auto key = [&](const std::string& name) -> std::optional<std::string> {
    auto it = doc.keys.find(name);
    if (it == doc.keys.end()) return std::nullopt;
    return it->second.first;
  };
  const std::string family = key("family").value_or("gaussian");
  ModelFile out;

  HmmParams hmm;
  bool has_chain = false;
  MultiViewMixtureParams mix;
  long long declared_views = 0;
  if (auto v = key("views")) declared_views = parse_int(*v, doc.keys.at("views").second);

  for (const auto& b : doc.blocks) {
    if (b.name == "weights") {
      mix.weights = to_vector(b);
    } else if (starts_with(b.name, "view ")) {
      const auto idx = block_indices(b, "view ");
      if (idx.size() != 1 || idx[0] < 1) parse_error(b.line, "expected 'view <v>:'");
      const auto v = static_cast<std::size_t>(idx[0] - 1);
      if (mix.means.size() <= v) mix.means.resize(v + 1);
      mix.means[v] = to_matrix(b);
    } else if (starts_with(b.name, "cov ")) {
      const auto idx = block_indices(b, "cov ");
      if (idx.size() == 2 && idx[0] >= 1 && idx[1] >= 1) {
        const auto v = static_cast<std::size_t>(idx[0] - 1);
        const auto j = static_cast<std::size_t>(idx[1] - 1);
        if (mix.covariances.size() <= v) mix.covariances.resize(v + 1);
        if (mix.covariances[v].size() <= j) mix.covariances[v].resize(j + 1);
        mix.covariances[v][j] = to_matrix(b);
      } else if (idx.size() == 1 && idx[0] >= 1) {
        const auto j = static_cast<std::size_t>(idx[0] - 1);
        if (hmm.state_covariances.size() <= j) hmm.state_covariances.resize(j + 1);
        hmm.state_covariances[j] = to_matrix(b);
      } else {
        parse_error(b.line, "expected 'cov <view> <component>:' or 'cov <state>:'");
      }
    } else if (b.name == "initial") {
      hmm.initial = to_vector(b);
      has_chain = true;
    } else if (b.name == "transition") {
      hmm.transition = to_matrix(b);
      has_chain = true;
    } else if (b.name == "observation") {
      hmm.observation = to_matrix(b);
      has_chain = true;
    } else {
      parse_error(b.line, "unknown block '" + b.name + "'");
    }
  }

  if (family == "hmm" || has_chain) {
    if (hmm.initial.size() == 0 || hmm.transition.size() == 0 || hmm.observation.size() == 0) {
      fail(ErrorCode::kParseError, "an HMM needs 'initial:', 'transition:' and 'observation:' blocks");
    }
    hmm.noise = parse_noise(key("noise").value_or("multinomial"));
    out.hmm = std::move(hmm);
  }
  if (family != "hmm") {
    mix.family = parse_family(family);
    if (mix.means.empty()) fail(ErrorCode::kParseError, "missing 'view <v>:' blocks");
    // A lone "view 1:" block stands for identical views: "views: l" of them, or 3.
    if (declared_views == 0 && mix.means.size() == 1) declared_views = 3;
    if (declared_views > 1 && mix.means.size() == 1) mix.means.assign(static_cast<std::size_t>(declared_views), mix.means[0]);
    if (!mix.covariances.empty()) {
      if (declared_views > 1 && mix.covariances.size() == 1) {
        mix.covariances.assign(static_cast<std::size_t>(declared_views), mix.covariances[0]);
      }
      mix.covariances.resize(mix.means.size());
    }
    out.mixture = std::move(mix);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Moment files

void write_moments(std::ostream& out, const MomentSet& set) {
  out << "sample_count: " << set.sample_count << '\n';
  out << "pairs_12:\n";
  write_matrix(out, set.pairs_12);
  out << "pairs_13:\n";
  write_matrix(out, set.pairs_13);
  out << "mean_view3:\n" << join_row(set.mean_view3) << '\n';
  for (const auto& c : set.triples_contractions) {
    out << "triples:\n" << join_row(c.direction) << '\n';
    write_matrix(out, c.contracted);
  }
  for (const auto& f : set.fourth_contractions) {
    out << "fourth:\n" << join_row(f.phi) << '\n' << join_row(f.psi) << '\n';
    write_matrix(out, f.contracted);
  }
}

MomentSet read_moments(std::istream& in) {
  const auto doc = parse_blocks(in);
  MomentSet set;
  if (auto it = doc.keys.find("sample_count"); it != doc.keys.end()) {
    set.sample_count = static_cast<std::size_t>(parse_int(it->second.first, it->second.second));
  }
  auto split_rows = [](const Block& b, std::size_t head) {
    Block rest{b.name, b.line + head, {b.rows.begin() + static_cast<std::ptrdiff_t>(head), b.rows.end()}};
    return rest;
  };
  auto head_vector = [](const Block& b, std::size_t i) {
    const auto& r = b.rows[i];
    return Vector(Eigen::Map<const Vector>(r.data(), static_cast<Index>(r.size())));
  };
  for (const auto& b : doc.blocks) {
    if (b.name == "pairs_12") {
      set.pairs_12 = to_matrix(b);
    } else if (b.name == "pairs_13") {
      set.pairs_13 = to_matrix(b);
    } else if (b.name == "mean_view3") {
      set.mean_view3 = to_vector(b);
    } else if (b.name == "triples") {
      if (b.rows.size() < 2) parse_error(b.line, "triples block needs a direction and a matrix");
      set.triples_contractions.push_back({head_vector(b, 0), to_matrix(split_rows(b, 1))});
    } else if (b.name == "fourth") {
      if (b.rows.size() < 3) parse_error(b.line, "fourth block needs phi, psi and a matrix");
      set.fourth_contractions.push_back({head_vector(b, 0), head_vector(b, 1), to_matrix(split_rows(b, 2))});
    } else {
      parse_error(b.line, "unknown block '" + b.name + "'");
    }
  }
  if (set.pairs_12.size() == 0 || set.pairs_13.size() == 0 || set.mean_view3.size() == 0) {
    fail(ErrorCode::kParseError, "moment file needs pairs_12, pairs_13 and mean_view3 blocks");
  }
  return set;
}

// ---------------------------------------------------------------------------
// Files

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::kIoFailure, "cannot open " + tmp.string() + " for writing");
    out << content;
    out.flush();
    if (!out) fail(ErrorCode::kIoFailure, "write to " + tmp.string() + " failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorCode::kIoFailure, "cannot rename onto " + path.string() + ": " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIoFailure, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace mvmom::io
