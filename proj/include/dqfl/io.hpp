#pragma once

// Text formats shared by the library and the CLI.
//
// Vector file (parameters, policy weights):
//   line 1: "dqfl-vector 1"
//   line 2: element count n
//   lines 3..n+2: one value each, shortest round-trip decimal form
//
// Sample file (one client split): one sample per line, "label x_1 ... x_d",
// space-separated. An empty split is an empty file.
//
// Dataset directory: manifest.json, server_validation.txt and
// client_<id>_{train,test,validation}.txt for every client.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "dqfl/data_synth.hpp"
#include "dqfl/error.hpp"
#include "dqfl/model.hpp"

namespace dqfl {

inline constexpr int kSchemaVersion = 1;

/// Shortest decimal string that parses back to exactly x.
inline std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  double x = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ConfigError("malformed number '" + std::string(s) + "'");
  return x;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << content;
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string format_vector(std::span<const double> v) {
  std::string out = "dqfl-vector 1\n" + std::to_string(v.size()) + "\n";
  for (double x : v) {
    out += format_double(x);
    out += '\n';
  }
  return out;
}

inline std::vector<double> parse_vector(std::istream& in) {
  std::string header;
  if (!std::getline(in, header) || header != "dqfl-vector 1") throw ConfigError("missing dqfl-vector header");
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("missing vector length");
  const auto n = static_cast<std::size_t>(parse_double(line));
  std::vector<double> v;
  v.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw ConfigError("vector file truncated");
    v.push_back(parse_double(line));
  }
  return v;
}

inline void save_vector(const std::filesystem::path& path, std::span<const double> v) {
  write_text_file(path, format_vector(v));
}

inline std::vector<double> load_vector(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  return parse_vector(in);
}

inline std::string format_samples(const Batch& b) {
  std::string out;
  for (std::size_t i = 0; i < b.size(); ++i) {
    out += std::to_string(b.labels[i]);
    for (double x : b.row(i)) {
      out += ' ';
      out += format_double(x);
    }
    out += '\n';
  }
  return out;
}

inline Batch parse_samples(const std::string& text, std::size_t dim) {
  Batch b;
  b.dim = dim;
  std::istringstream in(text);
  std::string line;
  std::vector<double> row;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string tok;
    if (!(fields >> tok)) continue;
    const int label = static_cast<int>(parse_double(tok));
    row.clear();
    while (fields >> tok) row.push_back(parse_double(tok));
    if (row.size() != dim)
      throw ConfigError("sample has " + std::to_string(row.size()) + " features, expected " + std::to_string(dim));
    b.push_back(row, label);
  }
  return b;
}

inline nlohmann::json synth_config_to_json(const SynthConfig& c) {
  return {{"num_clients", c.num_clients},
          {"input_dim", c.input_dim},
          {"num_classes", c.num_classes},
          {"alpha", c.alpha},
          {"beta", c.beta},
          {"samples_min", c.samples_min},
          {"samples_max", c.samples_max},
          {"label_skew", c.label_skew},
          {"logit_noise", c.logit_noise},
          {"server_validation_fraction", c.server_validation_fraction},
          {"seed", c.seed}};
}

inline std::string client_file(std::size_t id, const char* split) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "client_%05zu_%s.txt", id, split);
  return buf;
}

inline void export_federation(const Federation& fed, const SynthConfig& cfg, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  nlohmann::json clients = nlohmann::json::array();
  for (const auto& c : fed.clients) {
    write_text_file(dir / client_file(c.client_id, "train"), format_samples(c.train));
    write_text_file(dir / client_file(c.client_id, "test"), format_samples(c.test));
    write_text_file(dir / client_file(c.client_id, "validation"), format_samples(c.validation));
    clients.push_back({{"id", c.client_id},
                       {"sample_count", c.sample_count},
                       {"train", c.train.size()},
                       {"test", c.test.size()},
                       {"validation", c.validation.size()}});
  }
  write_text_file(dir / "server_validation.txt", format_samples(fed.server_validation));
  const auto stats = shard_stats(fed.clients);
  nlohmann::json manifest = {{"schema_version", kSchemaVersion},
                             {"input_dim", cfg.input_dim},
                             {"num_classes", cfg.num_classes},
                             {"num_clients", fed.clients.size()},
                             {"total_samples", stats.total_samples},
                             {"server_validation", fed.server_validation.size()},
                             {"clients", clients},
                             {"config", synth_config_to_json(cfg)}};
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

inline Federation import_federation(const std::filesystem::path& dir) {
  const auto manifest = nlohmann::json::parse(read_text_file(dir / "manifest.json"));
  if (manifest.at("schema_version").get<int>() != kSchemaVersion) throw ConfigError("unsupported manifest version");
  const auto dim = manifest.at("input_dim").get<std::size_t>();
  Federation fed;
  for (const auto& entry : manifest.at("clients")) {
    ClientShard c;
    c.client_id = entry.at("id").get<std::size_t>();
    c.sample_count = entry.at("sample_count").get<std::size_t>();
    c.train = parse_samples(read_text_file(dir / client_file(c.client_id, "train")), dim);
    c.test = parse_samples(read_text_file(dir / client_file(c.client_id, "test")), dim);
    c.validation = parse_samples(read_text_file(dir / client_file(c.client_id, "validation")), dim);
    if (c.train.size() + c.test.size() + c.validation.size() != c.sample_count)
      throw ConfigError("client " + std::to_string(c.client_id) + " file sizes disagree with manifest");
    fed.clients.push_back(std::move(c));
  }
  fed.server_validation = parse_samples(read_text_file(dir / "server_validation.txt"), dim);
  assign_shares(fed.clients);
  return fed;
}

}  // namespace dqfl
