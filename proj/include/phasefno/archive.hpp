#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "phasefno/tensor.hpp"

namespace phasefno {

/// Malformed, truncated or mismatched archive file.
class ArchiveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Self-describing container: a key-value text block plus named float64 arrays.
///
/// Layout:
///   phasefno-archive\n kind <kind>\n version 1\n
///   meta <bytes>\n <key=value lines>
///   arrays <count>\n
///   per array: <name> <real|complex> <rank> <dims...>\n <little-endian float64 payload>
///   end\n
/// Complex arrays store interleaved (re, im) pairs.
struct Archive {
  std::string kind;
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::pair<std::string, ad::Tensor>> arrays;

  void set(const std::string& key, std::string value);
  void add(const std::string& name, ad::Tensor array);

  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  const ad::Tensor& array(const std::string& name) const;
  bool has_array(const std::string& name) const;
};

inline constexpr int kArchiveVersion = 1;

std::string serialize(const Archive& archive);
Archive deserialize(const std::string& bytes);

/// Writes via a temporary sibling and rename, so readers never see a partial file.
void write_archive(const Archive& archive, const std::filesystem::path& path);
Archive read_archive(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double value);
double parse_double(const std::string& text);

}  // namespace phasefno
