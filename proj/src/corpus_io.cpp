// src/corpus_io.cpp

// Copyright 2026  The spkv Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "spkv/corpus_io.hpp"

#include "spkv/error.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

namespace spkv::io {

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

// Iterates lines, giving 1-based line numbers. Blank lines are skipped.
template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    auto fields = split_ws(text.substr(pos, end - pos));
    if (!fields.empty()) fn(line_no, fields);
    if (end == text.size()) break;
    pos = end + 1;
  }
}

class ByteWriter {
 public:
  void put_bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  template <typename U>
  void put_le(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void put_f32(float f) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    put_le(u);
  }
  void put_f64(double d) {
    std::uint64_t u;
    std::memcpy(&u, &d, 8);
    put_le(u);
  }
  void put_name(const std::string& name) {
    if (name.size() > 0xffff) throw DataError("name longer than 65535 bytes: " + name.substr(0, 32));
    put_le(static_cast<std::uint16_t>(name.size()));
    put_bytes(name.data(), name.size());
  }
  std::vector<char>& bytes() { return buf_; }

 private:
  std::vector<char> buf_;
};

class ByteReader {
 public:
  ByteReader(std::string_view bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

  void need(std::size_t n, const char* what) const {
    if (pos_ + n > bytes_.size()) {
      throw DataError(source_ + ": truncated file reading " + what + ": expected " +
                      std::to_string(pos_ + n) + " bytes, actual " + std::to_string(bytes_.size()));
    }
  }
  template <typename U>
  U get_le(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }
  float get_f32(const char* what) {
    const auto u = get_le<std::uint32_t>(what);
    float f;
    std::memcpy(&f, &u, 4);
    return f;
  }
  double get_f64(const char* what) {
    const auto u = get_le<std::uint64_t>(what);
    double d;
    std::memcpy(&d, &u, 8);
    return d;
  }
  std::string get_name() {
    const auto len = get_le<std::uint16_t>("name length");
    need(len, "name");
    std::string s(bytes_.substr(pos_, len));
    pos_ += len;
    return s;
  }
  std::string_view get_raw(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  std::size_t size() const { return bytes_.size(); }
  const std::string& source() const { return source_; }

 private:
  std::string_view bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

void write_bytes(const std::filesystem::path& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

Label parse_label(std::string_view tok, const std::string& source, int line) {
  if (tok == "target" || tok == "1") return Label::kTarget;
  if (tok == "nontarget" || tok == "0") return Label::kNontarget;
  throw ParseError(source, line, "unknown label '" + std::string(tok) + "'");
}

}  // namespace

std::string_view to_string(Domain d) { return d == Domain::kSource ? "source" : "target"; }

Domain parse_domain(std::string_view s) {
  if (s == "source") return Domain::kSource;
  if (s == "target") return Domain::kTarget;
  throw DataError("unknown domain '" + std::string(s) + "'");
}

std::string format_real(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_real(std::string_view s, const std::string& what) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw DataError("invalid number '" + std::string(s) + "' for " + what);
  return v;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

// ---------------------------------------------------------------- Manifest

Manifest::Manifest(std::vector<ManifestEntry> entries) {
  entries_.reserve(entries.size());
  for (auto& e : entries) add(std::move(e));
}

void Manifest::add(ManifestEntry e) {
  index_.emplace(e.utt, entries_.size());
  entries_.push_back(std::move(e));
}

const ManifestEntry* Manifest::find(const std::string& utt) const {
  auto it = index_.find(utt);
  return it == index_.end() ? nullptr : &entries_[it->second];
}

void Manifest::validate() const {
  std::unordered_set<std::string_view> seen;
  for (const auto& e : entries_) {
    if (!seen.insert(e.utt).second) throw DataError("manifest: duplicate utterance id '" + e.utt + "'");
    if (!(e.duration > 0.0) || !std::isfinite(e.duration))
      throw DataError("manifest: utterance '" + e.utt + "' has non-positive duration");
    if (e.domain == Domain::kSource && !e.speaker)
      throw DataError("manifest: source utterance '" + e.utt + "' has no speaker id");
    if (!(e.speed_ratio > 0.0)) throw DataError("manifest: utterance '" + e.utt + "' has bad speed ratio");
  }
}

std::size_t Manifest::num_speakers() const {
  std::unordered_set<std::string_view> spk;
  for (const auto& e : entries_)
    if (e.speaker) spk.insert(*e.speaker);
  return spk.size();
}

Manifest read_manifest(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  const std::string source = path.string();
  Manifest m;
  for_each_line(text, [&](int line, const std::vector<std::string_view>& f) {
    if (f.size() != 4 && f.size() != 6)
      throw ParseError(source, line, "expected 4 or 6 fields, got " + std::to_string(f.size()));
    ManifestEntry e;
    e.utt = std::string(f[0]);
    if (f[1] != "-") e.speaker = std::string(f[1]);
    try {
      e.domain = parse_domain(f[2]);
      e.duration = parse_real(f[3], "duration");
      if (f.size() == 6) {
        e.speed_ratio = parse_real(f[4], "speed ratio");
        e.augment = std::string(f[5]);
      }
    } catch (const ParseError&) {
      throw;
    } catch (const DataError& err) {
      throw ParseError(source, line, err.what());
    }
    if (m.find(e.utt)) throw ParseError(source, line, "duplicate utterance id '" + e.utt + "'");
    m.add(std::move(e));
  });
  m.validate();
  return m;
}

void write_manifest(const Manifest& m, const std::filesystem::path& path) {
  std::string out;
  for (const auto& e : m.entries()) {
    out += e.utt + ' ' + (e.speaker ? *e.speaker : "-") + ' ' + std::string(to_string(e.domain)) + ' ' +
           format_real(e.duration);
    if (e.speed_ratio != 1.0 || e.augment != "clean") out += ' ' + format_real(e.speed_ratio) + ' ' + e.augment;
    out += '\n';
  }
  write_text_file(path, out);
}

// ----------------------------------------------------------- EmbeddingSet

EmbeddingSet::EmbeddingSet(int dim) : dim_(dim) {
  if (dim < 0) throw DataError("embedding dim must be non-negative");
}

EmbeddingSet::EmbeddingSet(std::vector<std::string> names, const RowMatrixXf& vectors)
    : dim_(static_cast<int>(vectors.cols())) {
  if (names.size() != static_cast<std::size_t>(vectors.rows()))
    throw DataError("embedding set: name count does not match vector count");
  for (std::size_t i = 0; i < names.size(); ++i) add(std::move(names[i]), vectors.row(i).transpose());
}

void EmbeddingSet::add(std::string name, const Eigen::Ref<const Eigen::VectorXf>& v) {
  if (v.size() != dim_)
    throw DataError("embedding '" + name + "' has length " + std::to_string(v.size()) + ", expected " +
                    std::to_string(dim_));
  if (!v.allFinite()) throw DataError("embedding '" + name + "' has non-finite values");
  if (index_.count(name)) throw DataError("duplicate embedding name '" + name + "'");
  index_.emplace(name, names_.size());
  names_.push_back(std::move(name));
  data_.insert(data_.end(), v.data(), v.data() + v.size());
}

void EmbeddingSet::add(std::string name, const Eigen::Ref<const Eigen::VectorXd>& v) {
  Eigen::VectorXf f = v.cast<float>();
  add(std::move(name), f);
}

std::optional<std::size_t> EmbeddingSet::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t EmbeddingSet::index_of(const std::string& name) const {
  auto i = find(name);
  if (!i) throw DataError("no embedding named '" + name + "'");
  return *i;
}

bool EmbeddingSet::operator==(const EmbeddingSet& o) const {
  return dim_ == o.dim_ && names_ == o.names_ &&
         std::memcmp(data_.data(), o.data_.data(), data_.size() * sizeof(float)) == 0 &&
         data_.size() == o.data_.size();
}

std::vector<char> encode_embedding_set(const EmbeddingSet& set) {
  ByteWriter w;
  w.put_bytes("EMB1", 4);
  w.put_le(static_cast<std::uint32_t>(set.dim()));
  w.put_le(static_cast<std::uint64_t>(set.size()));
  for (std::size_t i = 0; i < set.size(); ++i) {
    w.put_name(set.name(i));
    const auto v = set.vector(i);
    for (int d = 0; d < set.dim(); ++d) w.put_f32(v[d]);
  }
  return std::move(w.bytes());
}

EmbeddingSet decode_embedding_set(std::string_view bytes, const std::string& source) {
  ByteReader r(bytes, source);
  if (r.get_raw(4, "magic") != "EMB1") throw DataError(source + ": bad magic, expected EMB1");
  const auto dim = r.get_le<std::uint32_t>("dim");
  const auto count = r.get_le<std::uint64_t>("count");
  if (dim > (1u << 24)) throw DataError(source + ": implausible dim " + std::to_string(dim));
  // Every record needs at least the name length field plus the vector.
  const long double min_size = 16.0L + static_cast<long double>(count) * (2.0L + 4.0L * dim);
  if (min_size > static_cast<long double>(bytes.size())) {
    throw DataError(source + ": truncated file: header declares " + std::to_string(count) +
                    " records of dim " + std::to_string(dim) + ", expected at least " +
                    std::to_string(static_cast<unsigned long long>(min_size)) + " bytes, actual " +
                    std::to_string(bytes.size()));
  }
  EmbeddingSet set(static_cast<int>(dim));
  Eigen::VectorXf v(dim);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = r.get_name();
    for (std::uint32_t d = 0; d < dim; ++d) v[d] = r.get_f32("vector");
    try {
      set.add(std::move(name), v);
    } catch (const DataError& e) {
      throw DataError(source + ": record " + std::to_string(i) + ": " + e.what());
    }
  }
  if (r.pos() != r.size())
    throw DataError(source + ": " + std::to_string(r.size() - r.pos()) + " trailing bytes after last record");
  return set;
}

EmbeddingSet read_embedding_set(const std::filesystem::path& path) {
  const std::string bytes = read_text_file(path);
  return decode_embedding_set(bytes, path.string());
}

void write_embedding_set(const EmbeddingSet& set, const std::filesystem::path& path) {
  write_bytes(path, encode_embedding_set(set));
}

// -------------------------------------------------------------- TrialList

TrialList::TrialList(std::vector<Trial> pairs) : pairs_(std::move(pairs)) {
  std::set<std::pair<std::string_view, std::string_view>> seen;
  for (std::size_t i = 0; i < pairs_.size(); ++i) {
    const auto& t = pairs_[i];
    const int line = t.line > 0 ? t.line : static_cast<int>(i + 1);
    if (t.label.has_value() != pairs_.front().label.has_value())
      throw ParseError("<trials>", line, "mixed labeled and unlabeled pairs");
    if (!seen.emplace(t.enroll, t.test).second)
      throw ParseError("<trials>", line, "duplicate pair " + t.enroll + " " + t.test);
  }
}

std::vector<int> TrialList::labels() const {
  if (!labeled()) throw DataError("trial list carries no labels");
  std::vector<int> out;
  out.reserve(pairs_.size());
  for (const auto& t : pairs_) out.push_back(*t.label == Label::kTarget ? 1 : 0);
  return out;
}

bool TrialList::operator==(const TrialList& o) const {
  if (pairs_.size() != o.pairs_.size()) return false;
  for (std::size_t i = 0; i < pairs_.size(); ++i) {
    const auto &a = pairs_[i], &b = o.pairs_[i];
    if (a.enroll != b.enroll || a.test != b.test || a.label != b.label) return false;
  }
  return true;
}

TrialList parse_trial_list(std::string_view text, const std::string& source) {
  std::vector<Trial> pairs;
  std::set<std::pair<std::string, std::string>> seen;
  for_each_line(text, [&](int line, const std::vector<std::string_view>& f) {
    if (f.size() < 2) throw ParseError(source, line, "expected 'enroll test [label]'");
    if (f.size() > 3) throw ParseError(source, line, "too many fields");
    Trial t{std::string(f[0]), std::string(f[1]), std::nullopt, line};
    if (f.size() == 3) t.label = parse_label(f[2], source, line);
    if (!pairs.empty() && t.label.has_value() != pairs.front().label.has_value())
      throw ParseError(source, line, "mixed labeled and unlabeled lines");
    if (!seen.emplace(t.enroll, t.test).second)
      throw ParseError(source, line, "duplicate pair " + t.enroll + " " + t.test);
    pairs.push_back(std::move(t));
  });
  return TrialList(std::move(pairs));
}

TrialList read_trial_list(const std::filesystem::path& path) {
  return parse_trial_list(read_text_file(path), path.string());
}

void write_trial_list(const TrialList& trials, const std::filesystem::path& path) {
  std::string out;
  for (const auto& t : trials.pairs()) {
    out += t.enroll + ' ' + t.test;
    if (t.label) out += *t.label == Label::kTarget ? " target" : " nontarget";
    out += '\n';
  }
  write_text_file(path, out);
}

// --------------------------------------------------------------- ScoreSet

void ScoreSet::validate() const {
  if (scores.size() != trials.size())
    throw DataError("score set has " + std::to_string(scores.size()) + " scores for " +
                    std::to_string(trials.size()) + " pairs");
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (!std::isfinite(scores[i]))
      throw DataError("non-finite score for pair " + trials.pairs()[i].enroll + " " + trials.pairs()[i].test);
}

ScoreSet parse_score_file(std::string_view text, const std::string& source) {
  std::vector<Trial> pairs;
  std::vector<double> scores;
  std::set<std::pair<std::string, std::string>> seen;
  for_each_line(text, [&](int line, const std::vector<std::string_view>& f) {
    if (f.size() != 3) throw ParseError(source, line, "expected 'enroll test score'");
    double s;
    try {
      s = parse_real(f[2], "score");
    } catch (const DataError& e) {
      throw ParseError(source, line, e.what());
    }
    if (!std::isfinite(s)) throw ParseError(source, line, "non-finite score");
    Trial t{std::string(f[0]), std::string(f[1]), std::nullopt, line};
    if (!seen.emplace(t.enroll, t.test).second)
      throw ParseError(source, line, "duplicate pair " + t.enroll + " " + t.test);
    pairs.push_back(std::move(t));
    scores.push_back(s);
  });
  return ScoreSet{TrialList(std::move(pairs)), std::move(scores)};
}

ScoreSet read_score_file(const std::filesystem::path& path) {
  return parse_score_file(read_text_file(path), path.string());
}

void write_score_file(const ScoreSet& scores, const std::filesystem::path& path) {
  scores.validate();
  std::string out;
  for (std::size_t i = 0; i < scores.scores.size(); ++i) {
    const auto& t = scores.trials.pairs()[i];
    out += t.enroll + ' ' + t.test + ' ' + format_real(scores.scores[i]) + '\n';
  }
  write_text_file(path, out);
}

ScoreSet attach_labels(ScoreSet scores, const TrialList& labeled) {
  if (scores.trials.size() != labeled.size()) throw DataError("score file and trial list differ in length");
  std::vector<Trial> pairs = labeled.pairs();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& s = scores.trials.pairs()[i];
    if (s.enroll != pairs[i].enroll || s.test != pairs[i].test)
      throw DataError("score file and trial list disagree at pair " + std::to_string(i + 1));
  }
  scores.trials = TrialList(std::move(pairs));
  return scores;
}

// ---------------------------------------------------------- MatrixArchive

MatrixArchive read_matrix_archive(const std::filesystem::path& path) {
  const std::string bytes = read_text_file(path);
  ByteReader r(bytes, path.string());
  if (r.get_raw(4, "magic") != "MAT1") throw DataError(path.string() + ": bad magic, expected MAT1");
  const auto count = r.get_le<std::uint64_t>("count");
  MatrixArchive out;
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = r.get_name();
    const auto rows = r.get_le<std::uint32_t>("rows");
    const auto cols = r.get_le<std::uint32_t>("cols");
    r.need(static_cast<std::size_t>(rows) * cols * 8, "matrix data");
    MatrixXd m(rows, cols);
    for (std::uint32_t a = 0; a < rows; ++a)
      for (std::uint32_t b = 0; b < cols; ++b) m(a, b) = r.get_f64("matrix data");
    out.emplace_back(std::move(name), std::move(m));
  }
  if (r.pos() != r.size()) throw DataError(path.string() + ": trailing bytes after last matrix");
  return out;
}

void write_matrix_archive(const MatrixArchive& archive, const std::filesystem::path& path) {
  ByteWriter w;
  w.put_bytes("MAT1", 4);
  w.put_le(static_cast<std::uint64_t>(archive.size()));
  for (const auto& [name, m] : archive) {
    w.put_name(name);
    w.put_le(static_cast<std::uint32_t>(m.rows()));
    w.put_le(static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index a = 0; a < m.rows(); ++a)
      for (Eigen::Index b = 0; b < m.cols(); ++b) w.put_f64(m(a, b));
  }
  write_bytes(path, w.bytes());
}

std::vector<std::pair<std::string, std::string>> read_pairs(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  std::vector<std::pair<std::string, std::string>> out;
  for_each_line(text, [&](int line, const std::vector<std::string_view>& f) {
    if (f.size() != 2) throw ParseError(path.string(), line, "expected 'key value'");
    out.emplace_back(std::string(f[0]), std::string(f[1]));
  });
  return out;
}

void write_pairs(const std::vector<std::pair<std::string, std::string>>& pairs,
                 const std::filesystem::path& path) {
  std::string out;
  for (const auto& [k, v] : pairs) out += k + ' ' + v + '\n';
  write_text_file(path, out);
}

}  // namespace spkv::io
