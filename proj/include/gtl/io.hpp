#ifndef GTL_IO_HPP_
#define GTL_IO_HPP_

#include <array>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <openssl/evp.h>

#include "gtl/approximator.hpp"
#include "gtl/common.hpp"
#include "gtl/taskspace.hpp"
#include "gtl/trajectory.hpp"

namespace gtl::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

/// Shortest round-trip decimal for a double; keeps CSV content byte-stable.
inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline json to_json(const Vec& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

inline Vec vec_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline void write_text(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io_error", "cannot write " + path.string());
  out << content;
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io_error", "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

/// CSV from a header and numeric rows.
inline void write_csv(const fs::path& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows) {
  std::string s;
  for (std::size_t i = 0; i < header.size(); ++i) s += (i ? "," : "") + header[i];
  s += "\n";
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) s += (i ? "," : "") + num(r[i]);
    s += "\n";
  }
  write_text(path, s);
}

inline std::string sha256_hex(const std::string& data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

inline std::string sha256_file(const fs::path& path) { return sha256_hex(read_text(path)); }

// ---------------------------------------------------------------------------
// Tasks and trajectories

inline void write_taskset(const fs::path& csv, const TaskSet& ts, const TaskSpace& space) {
  std::vector<std::string> header;
  for (int j = 0; j < space.dims(); ++j) header.push_back("tau_" + std::to_string(j));
  std::vector<std::vector<double>> rows;
  for (const Task& t : ts.tasks) rows.emplace_back(t.coords.data(), t.coords.data() + t.dims());
  write_csv(csv, header, rows);
  fs::path side = csv;
  side.replace_extension(".json");
  write_json(side, {{"seed", ts.seed}, {"lower", to_json(space.lower())}, {"upper", to_json(space.upper())}});
}

/// One row per node: t, x..., u...; JSON sidecar {T, task, L_T}.
inline void write_trajectory(const fs::path& csv, const Trajectory& tr, const Task& task) {
  std::vector<std::string> header{"t"};
  for (int j = 0; j < tr.state_dim(); ++j) header.push_back("x_" + std::to_string(j));
  for (int j = 0; j < tr.control_dim(); ++j) header.push_back("u_" + std::to_string(j));
  std::vector<std::vector<double>> rows;
  for (int k = 0; k < tr.nodes(); ++k) {
    std::vector<double> r{tr.time_at(k)};
    for (int j = 0; j < tr.state_dim(); ++j) r.push_back(tr.states(k, j));
    for (int j = 0; j < tr.control_dim(); ++j) r.push_back(tr.controls(k, j));
    rows.push_back(std::move(r));
  }
  write_csv(csv, header, rows);
  fs::path side = csv;
  side.replace_extension(".json");
  write_json(side, {{"T", tr.duration}, {"task", to_json(task.coords)}, {"L_T", tr.nodes()}});
}

// ---------------------------------------------------------------------------
// Weights: "GTLW" magic, uint32 header length, JSON header, n little-endian doubles.

inline json net_config_json(const NetConfig& c) {
  return {{"n_hidden", c.n_hidden},         {"hidden_size", c.hidden_size},
          {"n_upsample", c.n_upsample},     {"kernel_len", c.kernel_len},
          {"state_dim", c.state_dim},       {"seq_len", c.seq_len},
          {"task_dim", c.task_dim},         {"input_center", to_json(c.input_center)},
          {"input_scale", to_json(c.input_scale)},
          {"channels", c.channels()},       {"initial_length", c.initial_length()},
          {"channel_schedule", "geometric halving, max(p, N_ch / 2^i) after step i"}};
}

inline NetConfig net_config_from_json(const json& j) {
  NetConfig c;
  c.n_hidden = j.at("n_hidden");
  c.hidden_size = j.at("hidden_size");
  c.n_upsample = j.at("n_upsample");
  c.kernel_len = j.at("kernel_len");
  c.state_dim = j.at("state_dim");
  c.seq_len = j.at("seq_len");
  c.task_dim = j.at("task_dim");
  c.input_center = vec_from_json(j.value("input_center", json::array()));
  c.input_scale = vec_from_json(j.value("input_scale", json::array()));
  return c;
}

inline void write_weights(const fs::path& path, const ApproximatorWeights& w) {
  const std::string header =
      json{{"net", net_config_json(w.config)}, {"seed", w.seed}, {"n", w.params.size()}}.dump();
  std::string s = "GTLW";
  const auto hl = static_cast<std::uint32_t>(header.size());
  for (int b = 0; b < 4; ++b) s += static_cast<char>((hl >> (8 * b)) & 0xFF);
  s += header;
  for (Eigen::Index i = 0; i < w.params.size(); ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, &w.params[i], sizeof bits);
    for (int b = 0; b < 8; ++b) s += static_cast<char>((bits >> (8 * b)) & 0xFF);
  }
  write_text(path, s);
}

inline ApproximatorWeights read_weights(const fs::path& path) {
  if (!fs::exists(path)) throw Error("missing_checkpoint", "weights file not found: " + path.string());
  const std::string s = read_text(path);
  auto bad = [&] { return Error("invalid_checkpoint", "malformed weights file: " + path.string()); };
  if (s.size() < 8 || s.compare(0, 4, "GTLW") != 0) throw bad();
  std::uint32_t hl = 0;
  for (int b = 0; b < 4; ++b) hl |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[4 + b])) << (8 * b);
  if (s.size() < 8 + hl) throw bad();
  const json h = json::parse(s.substr(8, hl));
  ApproximatorWeights w;
  w.config = net_config_from_json(h.at("net"));
  w.seed = h.at("seed");
  const std::size_t n = h.at("n");
  if (s.size() != 8 + hl + 8 * n) throw bad();
  w.params.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b)
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[8 + hl + 8 * i + b])) << (8 * b);
    std::memcpy(&w.params[static_cast<Eigen::Index>(i)], &bits, sizeof bits);
  }
  if (Network(w.config).num_params() != w.params.size()) throw bad();
  return w;
}

}  // namespace gtl::io

#endif  // GTL_IO_HPP_
