#ifndef CAPORA_CHECKPOINT_HPP
#define CAPORA_CHECKPOINT_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "capora/common.hpp"

namespace capora {

// Shared serialization container: a plain-text header describing kind,
// metadata, string sections and a tensor table, then a "payload" marker line,
// then the tensor entries as little-endian 64-bit floats in header order
// (column-major within each tensor). Round trips are bit-exact.

struct Checkpoint {
  static constexpr const char* kMagic = "capora-checkpoint";
  static constexpr int kFormatVersion = 1;

  std::string kind;  // "model" | "tagger"
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::pair<std::string, std::vector<std::string>>> strings;
  std::vector<std::pair<std::string, Eigen::MatrixXd>> tensors;

  std::optional<std::string> meta_value(const std::string& key) const {
    for (const auto& [k, v] : meta)
      if (k == key) return v;
    return std::nullopt;
  }
  std::string require_meta(const std::string& key) const {
    auto v = meta_value(key);
    if (!v) throw DataError("checkpoint missing meta key: " + key);
    return *v;
  }
  const std::vector<std::string>& require_strings(const std::string& name) const {
    for (const auto& [n, v] : strings)
      if (n == name) return v;
    throw DataError("checkpoint missing string section: " + name);
  }
  const Eigen::MatrixXd& require_tensor(const std::string& name) const {
    for (const auto& [n, v] : tensors)
      if (n == name) return v;
    throw DataError("checkpoint missing tensor: " + name);
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    out << kMagic << " " << kFormatVersion << "\n";
    out << "kind " << kind << "\n";
    for (const auto& [k, v] : meta) out << "meta " << k << " " << v << "\n";
    for (const auto& [name, list] : strings) {
      out << "strings " << name << " " << list.size() << "\n";
      for (const auto& s : list) out << s << "\n";
    }
    for (const auto& [name, t] : tensors)
      out << "tensor " << name << " " << t.rows() << " " << t.cols() << "\n";
    out << "payload\n";
    for (const auto& [name, t] : tensors) {
      std::vector<unsigned char> buf(static_cast<std::size_t>(t.size()) * 8);
      for (std::size_t i = 0; i < static_cast<std::size_t>(t.size()); ++i) {
        std::uint64_t bits = std::bit_cast<std::uint64_t>(t.data()[i]);
        for (int b = 0; b < 8; ++b)
          buf[i * 8 + static_cast<std::size_t>(b)] =
              static_cast<unsigned char>((bits >> (8 * b)) & 0xff);
      }
      out.write(reinterpret_cast<const char*>(buf.data()),
                static_cast<std::streamsize>(buf.size()));
    }
    if (!out) throw DataError("write failure on checkpoint: " + path);
  }

  static Checkpoint load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string blob = ss.str();

    Checkpoint ck;
    std::size_t pos = 0;
    auto next_line = [&]() -> std::string {
      auto nl = blob.find('\n', pos);
      if (nl == std::string::npos)
        throw DataError("checkpoint truncated before payload: " + path);
      std::string line = blob.substr(pos, nl - pos);
      pos = nl + 1;
      return line;
    };

    {
      auto header = split_ws(next_line());
      if (header.size() != 2 || header[0] != kMagic)
        throw DataError("not a checkpoint file: " + path);
      if (header[1] != std::to_string(kFormatVersion))
        throw DataError("unsupported checkpoint version " + header[1] + ": " + path);
    }
    {
      auto kind_line = split_ws(next_line());
      if (kind_line.size() != 2 || kind_line[0] != "kind")
        throw DataError("checkpoint missing kind line: " + path);
      ck.kind = kind_line[1];
    }

    std::vector<std::pair<std::string, std::pair<long, long>>> shapes;
    for (;;) {
      std::string line = next_line();
      if (line == "payload") break;
      auto fields = split_ws(line);
      if (fields.empty()) throw DataError("blank checkpoint header line: " + path);
      if (fields[0] == "meta") {
        if (fields.size() < 2) throw DataError("bad meta line: " + path);
        std::string key = fields[1];
        auto vpos = line.find(key, 5);
        std::string value = vpos + key.size() < line.size()
                                ? line.substr(vpos + key.size() + 1)
                                : "";
        ck.meta.emplace_back(key, value);
      } else if (fields[0] == "strings") {
        if (fields.size() != 3) throw DataError("bad strings line: " + path);
        std::size_t count = std::stoull(fields[2]);
        std::vector<std::string> list;
        list.reserve(count);
        for (std::size_t i = 0; i < count; ++i) list.push_back(next_line());
        ck.strings.emplace_back(fields[1], std::move(list));
      } else if (fields[0] == "tensor") {
        if (fields.size() != 4) throw DataError("bad tensor line: " + path);
        shapes.emplace_back(fields[1],
                            std::make_pair(std::stol(fields[2]), std::stol(fields[3])));
      } else {
        throw DataError("unknown checkpoint header entry '" + fields[0] + "': " + path);
      }
    }

    for (const auto& [name, shape] : shapes) {
      auto [rows, cols] = shape;
      if (rows < 0 || cols < 0) throw DataError("negative tensor shape: " + path);
      std::size_t n = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
      if (pos + n * 8 > blob.size())
        throw DataError("checkpoint payload truncated at tensor " + name + ": " + path);
      Eigen::MatrixXd t(rows, cols);
      for (std::size_t i = 0; i < n; ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b)
          bits |= static_cast<std::uint64_t>(
                      static_cast<unsigned char>(blob[pos + i * 8 + static_cast<std::size_t>(b)]))
                  << (8 * b);
        t.data()[i] = std::bit_cast<double>(bits);
      }
      pos += n * 8;
      ck.tensors.emplace_back(name, std::move(t));
    }
    if (pos != blob.size())
      throw DataError("trailing bytes after checkpoint payload: " + path);
    return ck;
  }
};

}  // namespace capora

#endif  // CAPORA_CHECKPOINT_HPP
