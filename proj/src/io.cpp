#include "eeqt/io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <memory>
#include <sstream>
#include <stdexcept>

namespace eeqt {

namespace fs = std::filesystem;

namespace {

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new(), EVP_MD_CTX_free) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1)
      throw std::runtime_error("SHA-256 initialization failed");
  }
  void update(const char* data, size_t n) { EVP_DigestUpdate(ctx_.get(), data, n); }
  std::string hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_.get(), md.data(), &len);
    static const char* digits = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
      out.push_back(digits[md[i] >> 4]);
      out.push_back(digits[md[i] & 15]);
    }
    return out;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q.push_back('"');
    q.push_back(c);
  }
  return q + "\"";
}

}  // namespace

std::string sha256_hex(const std::string& bytes) {
  Sha256 h;
  h.update(bytes.data(), bytes.size());
  return h.hex();
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  Sha256 h;
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    h.update(buf.data(), static_cast<size_t>(in.gcount()));
  }
  return h.hex();
}

void write_file_atomic(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::array<char, 32> buf;
  const auto r = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), r.ptr);
}

void write_csv(const fs::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ostringstream os;
  auto line = [&](const std::vector<std::string>& cells) {
    for (size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << csv_cell(cells[i]);
    os << '\n';
  };
  line(header);
  for (const auto& r : rows) {
    if (r.size() != header.size()) throw std::logic_error("CSV row width does not match header");
    line(r);
  }
  write_file_atomic(path, os.str());
}

JsonlWriter::JsonlWriter(const fs::path& path) : out_(path, std::ios::trunc) {
  if (!out_) throw std::runtime_error("cannot write " + path.string());
}

void JsonlWriter::write(const Json& record) { out_ << record.dump() << '\n'; }

void JsonlWriter::close() { out_.close(); }

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::array<char, 32> buf;
  std::strftime(buf.data(), buf.size(), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf.data();
}

RunManifest::RunManifest(fs::path out_dir, std::string command, Json config, std::uint64_t seed, int workers)
    : dir_(std::move(out_dir)), command_(std::move(command)), config_(std::move(config)), seed_(seed),
      workers_(workers), started_(utc_now()) {
  fs::create_directories(dir_);
  dir_ = fs::canonical(dir_);
}

fs::path RunManifest::file(const std::string& name) {
  const fs::path p = (dir_ / name).lexically_normal();
  const auto rel = p.lexically_relative(dir_);
  if (rel.empty() || *rel.begin() == ".." || fs::path(name).is_absolute())
    throw std::invalid_argument("output file escapes the output directory: " + name);
  fs::create_directories(p.parent_path());
  if (std::find(files_.begin(), files_.end(), rel.generic_string()) == files_.end())
    files_.push_back(rel.generic_string());
  return p;
}

fs::path RunManifest::finish(int exit_code) {
  Json files = Json::array();
  for (const auto& f : files_) {
    const fs::path p = dir_ / f;
    if (!fs::exists(p)) continue;
    files.push_back({{"path", f}, {"bytes", fs::file_size(p)}, {"sha256", sha256_file(p)}});
  }
  Json m = {{"tool", "eeqt"},
            {"version", EEQT_VERSION},
            {"command", command_},
            {"seed", seed_},
            {"workers", workers_},
            {"config", config_},
            {"started_utc", started_},
            {"finished_utc", utc_now()},
            {"exit_code", exit_code},
            {"result", result_},
            {"files", files}};
  const fs::path path = dir_ / "manifest.json";
  write_file_atomic(path, m.dump(2) + "\n");
  return path;
}

}  // namespace eeqt
