#pragma once

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "netable/core/error.hpp"
#include "netable/text/token.hpp"

namespace netable::harness {

using nlohmann::json;

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write " + p.string());
  out << content;
}

inline std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw DataError("sha256 failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return os.str();
}

inline std::string file_sha256(const std::filesystem::path& p) { return sha256_hex(read_file(p)); }

inline void write_jsonl(const std::filesystem::path& p, const std::vector<json>& rows) {
  std::string out;
  for (const auto& r : rows) {
    out += r.dump();
    out += '\n';
  }
  write_file(p, out);
}

inline std::vector<json> read_jsonl(const std::filesystem::path& p) {
  std::vector<json> rows;
  std::istringstream in(read_file(p));
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.empty()) continue;
    try {
      rows.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw DataError(p.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rows;
}

// Tokens as {"tokens": [...], "ne_spans": [[position, type], ...]}.
inline void tokens_to_json(const text::TokenSeq& seq, json& j) {
  json toks = json::array(), spans = json::array();
  for (std::size_t i = 0; i < seq.size(); ++i) {
    toks.push_back(seq[i].text);
    if (seq[i].is_ne) spans.push_back(json::array({i, seq[i].ne_type}));
  }
  j["tokens"] = std::move(toks);
  j["ne_spans"] = std::move(spans);
}

inline text::TokenSeq tokens_from_json(const json& j) {
  text::TokenSeq seq;
  try {
    for (const auto& t : j.at("tokens")) seq.push_back(text::word(t.get<std::string>()));
    for (const auto& s : j.at("ne_spans")) {
      const auto pos = s.at(0).get<std::size_t>();
      if (pos >= seq.size()) throw DataError("ne span outside token list");
      seq[pos].is_ne = true;
      seq[pos].ne_type = s.at(1).get<std::string>();
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed token record: ") + e.what());
  }
  return seq;
}

}  // namespace netable::harness
