#include "wavesfm/signalpipe/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace wavesfm::sp {

namespace {

static_assert(std::endian::native == std::endian::little, "WFM1 I/O assumes a little-endian host");

constexpr char kMagic[4] = {'W', 'F', 'M', '1'};

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  template <typename T>
  T take() {
    if (pos_ + sizeof(T) > bytes_.size()) throw FormatError("WFM1: truncated data");
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_tensor(const tc::Tensor& t, DType dtype) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(dtype));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (auto e : t.shape()) put<std::uint64_t>(out, e);
  for (double v : t.data()) {
    if (dtype == DType::kFloat32) {
      put<float>(out, static_cast<float>(v));
    } else {
      put<double>(out, v);
    }
  }
  return out;
}

tc::Tensor decode_tensor(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("WFM1: bad magic");
  Reader r(bytes);
  r.take<std::uint32_t>();
  const auto code = r.take<std::uint32_t>();
  if (code != 1 && code != 2) throw FormatError("WFM1: unknown dtype code " + std::to_string(code));
  const auto rank = r.take<std::uint32_t>();
  if (rank == 0 || rank > 8) throw FormatError("WFM1: unsupported rank " + std::to_string(rank));
  tc::Shape shape(rank);
  for (auto& e : shape) {
    e = r.take<std::uint64_t>();
    if (e == 0) throw FormatError("WFM1: zero extent");
  }
  const std::size_t n = tc::shape_numel(shape);
  const std::size_t width = code == 1 ? 4 : 8;
  if (r.remaining() != n * width) {
    throw FormatError("WFM1: payload holds " + std::to_string(r.remaining()) + " bytes, header promises " +
                      std::to_string(n * width));
  }
  std::vector<double> values(n);
  for (auto& v : values) v = code == 1 ? static_cast<double>(r.take<float>()) : r.take<double>();
  return tc::Tensor::from(std::move(shape), std::move(values));
}

void write_tensor_file(const std::filesystem::path& path, const tc::Tensor& t, DType dtype) {
  const auto bytes = encode_tensor(t, dtype);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

tc::Tensor read_tensor_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  try {
    return decode_tensor(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_archive(const std::filesystem::path& dir, const Archive& archive) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = "wfm-archive";
  manifest["version"] = 1;
  manifest["generator"] = archive.generator;
  manifest["samples"] = nlohmann::json::array();
  for (std::size_t i = 0; i < archive.samples.size(); ++i) {
    const auto& s = archive.samples[i];
    const std::string id = s.sample_id.empty() ? "sample" + std::to_string(i) : s.sample_id;
    nlohmann::json entry;
    entry["sample_id"] = id;
    entry["modality"] = modality_name(s.modality);
    entry["file"] = id + ".wfm";
    write_tensor_file(dir / (id + ".wfm"), s.data);
    if (s.label) entry["label"] = *s.label;
    if (s.position) entry["position"] = *s.position;
    if (s.snr_db) entry["snr_db"] = *s.snr_db;
    if (s.target.defined()) {
      entry["target_file"] = id + ".target.wfm";
      write_tensor_file(dir / (id + ".target.wfm"), s.target);
    }
    manifest["samples"].push_back(entry);
  }
  std::ofstream os(dir / "manifest.json");
  os << manifest.dump(2) << '\n';
  if (!os) throw std::runtime_error("cannot write manifest in " + dir.string());
}

Archive read_archive(const std::filesystem::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw std::runtime_error("no manifest.json in " + dir.string());
  nlohmann::json manifest = nlohmann::json::parse(is);
  if (manifest.value("format", "") != "wfm-archive") throw FormatError("not a wfm-archive manifest: " + dir.string());
  Archive archive;
  archive.generator = manifest.value("generator", nlohmann::json::object());
  for (const auto& entry : manifest.at("samples")) {
    GridSample s;
    s.sample_id = entry.at("sample_id").get<std::string>();
    s.modality = parse_modality(entry.at("modality").get<std::string>());
    s.data = read_tensor_file(dir / entry.at("file").get<std::string>());
    if (entry.contains("label")) s.label = entry.at("label").get<int>();
    if (entry.contains("position")) s.position = entry.at("position").get<std::array<double, 3>>();
    if (entry.contains("snr_db")) s.snr_db = entry.at("snr_db").get<double>();
    if (entry.contains("target_file")) s.target = read_tensor_file(dir / entry.at("target_file").get<std::string>());
    archive.samples.push_back(std::move(s));
  }
  return archive;
}

}  // namespace wavesfm::sp
