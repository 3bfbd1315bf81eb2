#include "phasefno/archive.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

namespace phasefno {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes little-endian");

namespace {

constexpr const char* kMagic = "phasefno-archive";

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::string line() {
    const auto end = bytes_.find('\n', pos_);
    if (end == std::string::npos) throw ArchiveError("archive: truncated header");
    std::string out = bytes_.substr(pos_, end - pos_);
    pos_ = end + 1;
    return out;
  }

  std::string take(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw ArchiveError("archive: truncated payload");
    std::string out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::string> words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::size_t parse_size(const std::string& s) {
  std::size_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw ArchiveError("archive: expected a count, got '" + s + "'");
  }
  return v;
}

}  // namespace

void Archive::set(const std::string& key, std::string value) {
  if (key.empty() || key.find_first_of("=\n") != std::string::npos ||
      value.find('\n') != std::string::npos) {
    throw std::invalid_argument("archive: invalid meta entry '" + key + "'");
  }
  for (auto& [k, v] : meta) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  meta.emplace_back(key, std::move(value));
}

void Archive::add(const std::string& name, ad::Tensor array) {
  if (name.empty() || name.find_first_of(" \n") != std::string::npos) {
    throw std::invalid_argument("archive: invalid array name '" + name + "'");
  }
  if (has_array(name)) throw std::invalid_argument("archive: duplicate array '" + name + "'");
  arrays.emplace_back(name, std::move(array));
}

bool Archive::has(const std::string& key) const {
  for (const auto& [k, v] : meta) {
    if (k == key) return true;
  }
  return false;
}

const std::string& Archive::get(const std::string& key) const {
  for (const auto& [k, v] : meta) {
    if (k == key) return v;
  }
  throw ArchiveError("archive: missing meta key '" + key + "'");
}

bool Archive::has_array(const std::string& name) const {
  for (const auto& [n, a] : arrays) {
    if (n == name) return true;
  }
  return false;
}

const ad::Tensor& Archive::array(const std::string& name) const {
  for (const auto& [n, a] : arrays) {
    if (n == name) return a;
  }
  throw ArchiveError("archive: missing array '" + name + "'");
}

std::string serialize(const Archive& archive) {
  std::string meta;
  for (const auto& [k, v] : archive.meta) meta += k + "=" + v + "\n";

  std::string out = std::string(kMagic) + "\n";
  out += "kind " + archive.kind + "\n";
  out += "version " + std::to_string(kArchiveVersion) + "\n";
  out += "meta " + std::to_string(meta.size()) + "\n" + meta;
  out += "arrays " + std::to_string(archive.arrays.size()) + "\n";
  for (const auto& [name, a] : archive.arrays) {
    out += name + (a.is_complex() ? " complex " : " real ") + std::to_string(a.rank());
    for (std::size_t d : a.shape()) out += " " + std::to_string(d);
    out += "\n";
    const char* p = a.is_complex() ? reinterpret_cast<const char*>(a.complex_data().data())
                                   : reinterpret_cast<const char*>(a.real_data().data());
    const std::size_t n = a.numel() * sizeof(double) * (a.is_complex() ? 2 : 1);
    out.append(p, n);
  }
  out += "end\n";
  return out;
}

Archive deserialize(const std::string& bytes) {
  Reader r(bytes);
  Archive archive;
  if (r.line() != kMagic) throw ArchiveError("archive: bad magic string");

  auto field = [&r](const char* keyword) {
    const auto w = words(r.line());
    if (w.size() != 2 || w[0] != keyword) {
      throw ArchiveError(std::string("archive: expected '") + keyword + "' line");
    }
    return w[1];
  };
  archive.kind = field("kind");
  const std::string version = field("version");
  if (version != std::to_string(kArchiveVersion)) {
    throw ArchiveError("archive: unsupported version " + version + " (expected " +
                       std::to_string(kArchiveVersion) + ")");
  }
  const std::string meta = r.take(parse_size(field("meta")));
  std::istringstream lines(meta);
  for (std::string l; std::getline(lines, l);) {
    const auto eq = l.find('=');
    if (eq == std::string::npos) throw ArchiveError("archive: malformed meta line '" + l + "'");
    archive.meta.emplace_back(l.substr(0, eq), l.substr(eq + 1));
  }

  const std::size_t count = parse_size(field("arrays"));
  for (std::size_t a = 0; a < count; ++a) {
    const auto w = words(r.line());
    if (w.size() < 3 || (w[1] != "real" && w[1] != "complex")) {
      throw ArchiveError("archive: malformed array header");
    }
    const std::size_t rank = parse_size(w[2]);
    if (w.size() != 3 + rank) throw ArchiveError("archive: array '" + w[0] + "' shape mismatch");
    ad::Shape shape;
    for (std::size_t d = 0; d < rank; ++d) shape.push_back(parse_size(w[3 + d]));
    const bool cplx = w[1] == "complex";
    ad::Tensor t(shape, cplx ? ad::DType::complex128 : ad::DType::real64);
    const std::size_t n = t.numel() * sizeof(double) * (cplx ? 2 : 1);
    const std::string payload = r.take(n);
    char* dst = cplx ? reinterpret_cast<char*>(t.complex_data().data())
                     : reinterpret_cast<char*>(t.real_data().data());
    if (n > 0) std::memcpy(dst, payload.data(), n);
    archive.add(w[0], std::move(t));
  }
  if (r.line() != "end" || !r.done()) throw ArchiveError("archive: missing end marker");
  return archive;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArchiveError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ArchiveError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ArchiveError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_archive(const Archive& archive, const std::filesystem::path& path) {
  write_file(path, serialize(archive));
}

Archive read_archive(const std::filesystem::path& path) {
  try {
    return deserialize(read_file(path));
  } catch (const ArchiveError& e) {
    throw ArchiveError(path.string() + ": " + e.what());
  }
}

std::string format_double(double value) {
  char buf[32];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, p);
}

double parse_double(const std::string& text) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size()) {
    throw ArchiveError("expected a number, got '" + text + "'");
  }
  return v;
}

}  // namespace phasefno
