#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>

#include <json.hpp>

#include "overscale/errors.hpp"

namespace overscale {

using ordered_json = nlohmann::ordered_json;

/// Shortest decimal text that parses back to exactly `v`.
inline std::string format_double(double v) {
  if (!std::isfinite(v)) throw std::invalid_argument("non-finite value cannot be serialized");
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  if (res.ec != std::errc{}) throw std::runtime_error("to_chars failed");
  return std::string(buf, res.ptr);
}

namespace detail {

inline void write_canonical(const ordered_json& j, std::string& out) {
  switch (j.type()) {
    case ordered_json::value_t::object: {
      out += '{';
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ',';
        first = false;
        out += ordered_json(it.key()).dump();
        out += ':';
        write_canonical(it.value(), out);
      }
      out += '}';
      break;
    }
    case ordered_json::value_t::array: {
      out += '[';
      bool first = true;
      for (const auto& e : j) {
        if (!first) out += ',';
        first = false;
        write_canonical(e, out);
      }
      out += ']';
      break;
    }
    case ordered_json::value_t::number_float:
      out += format_double(j.get<double>());
      break;
    default:
      out += j.dump();
  }
}

}  // namespace detail

/// Compact serialization: insertion-ordered keys, no whitespace, floats in
/// shortest round-trip form.
inline std::string to_canonical(const ordered_json& j) {
  std::string out;
  detail::write_canonical(j, out);
  return out;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failure on '" + path + "'");
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("write failure on '" + path + "'");
}

inline ordered_json parse_json_file(const std::string& path) {
  const std::string text = read_text_file(path);
  try {
    return ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError("'" + path + "' is not valid JSON: " + e.what());
  }
}

}  // namespace overscale
