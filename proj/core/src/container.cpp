#include "ptlab/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ptlab/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "container payloads are little-endian; big-endian hosts unsupported");

namespace ptlab {

void Container::set_meta(const std::string& key, const std::string& value) {
  for (auto& [k, v] : meta)
    if (k == key) {
      v = value;
      return;
    }
  meta.emplace_back(key, value);
}

const std::string* Container::find_meta(const std::string& key) const {
  for (const auto& [k, v] : meta)
    if (k == key) return &v;
  return nullptr;
}

std::string Container::require_meta(const std::string& key) const {
  const std::string* v = find_meta(key);
  if (!v) throw Error(ErrorCategory::io, "container: missing meta key '" + key + "'");
  return *v;
}

void Container::add_tensor(const std::string& name, const Shape& shape,
                           std::span<const float> data) {
  if (shape_numel(shape) != static_cast<int64_t>(data.size()))
    throw Error(ErrorCategory::internal,
                "container: tensor '" + name + "' data length " + std::to_string(data.size()) +
                    " does not match shape " + shape_str(shape));
  tensors.push_back(ContainerTensor{name, shape, {data.begin(), data.end()}});
}

std::vector<uint8_t> Container::serialize() const {
  std::ostringstream man;
  for (const auto& [k, v] : meta) man << "meta " << k << ' ' << v << '\n';
  for (const auto& t : tensors) {
    man << "tensor " << t.name << " f32";
    for (int64_t d : t.shape) man << ' ' << d;
    man << '\n';
  }
  const std::string manifest = man.str();

  size_t payload_floats = 0;
  for (const auto& t : tensors) payload_floats += t.data.size();

  std::vector<uint8_t> out(16 + manifest.size() + payload_floats * 4);
  std::memcpy(out.data(), kContainerMagic, 8);
  const uint64_t mlen = manifest.size();
  std::memcpy(out.data() + 8, &mlen, 8);
  std::memcpy(out.data() + 16, manifest.data(), manifest.size());
  size_t off = 16 + manifest.size();
  for (const auto& t : tensors) {
    std::memcpy(out.data() + off, t.data.data(), t.data.size() * 4);
    off += t.data.size() * 4;
  }
  return out;
}

void Container::save(const std::filesystem::path& path) const {
  auto bytes = serialize();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCategory::io, "cannot open for writing: " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error(ErrorCategory::io, "write failed: " + path.string());
}

Container Container::deserialize(std::span<const uint8_t> bytes, const std::string& origin) {
  auto corrupt = [&](const std::string& why) -> Error {
    return Error(ErrorCategory::io, "corrupt container " + origin + ": " + why);
  };

  if (bytes.size() < 16) throw corrupt("truncated header");
  if (std::memcmp(bytes.data(), kContainerMagic, 8) != 0) throw corrupt("bad magic");
  uint64_t mlen = 0;
  std::memcpy(&mlen, bytes.data() + 8, 8);
  if (16 + mlen > bytes.size()) throw corrupt("manifest extends past end of file");

  Container c;
  std::string manifest(reinterpret_cast<const char*>(bytes.data() + 16), mlen);
  std::istringstream lines(manifest);
  std::string line;
  size_t payload_floats = 0;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "meta") {
      std::string key;
      ls >> key;
      std::string value;
      std::getline(ls, value);
      if (!value.empty() && value.front() == ' ') value.erase(0, 1);
      c.meta.emplace_back(key, value);
    } else if (tag == "tensor") {
      ContainerTensor t;
      std::string dtype;
      ls >> t.name >> dtype;
      if (dtype != "f32") throw corrupt("unsupported dtype '" + dtype + "'");
      int64_t d;
      while (ls >> d) t.shape.push_back(d);
      payload_floats += static_cast<size_t>(shape_numel(t.shape));
      c.tensors.push_back(std::move(t));
    } else {
      throw corrupt("unknown manifest line '" + line + "'");
    }
  }

  const size_t expect = 16 + mlen + payload_floats * 4;
  if (bytes.size() != expect)
    throw corrupt("payload size mismatch: manifest describes " + std::to_string(payload_floats) +
                  " floats but file holds " + std::to_string((bytes.size() - 16 - mlen) / 4));

  size_t off = 16 + mlen;
  for (auto& t : c.tensors) {
    size_t n = static_cast<size_t>(shape_numel(t.shape));
    t.data.resize(n);
    std::memcpy(t.data.data(), bytes.data() + off, n * 4);
    off += n * 4;
  }
  return c;
}

Container Container::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw Error(ErrorCategory::io, "cannot open: " + path.string());
  std::streamsize size = f.tellg();
  f.seekg(0);
  std::vector<uint8_t> bytes(static_cast<size_t>(size));
  if (!f.read(reinterpret_cast<char*>(bytes.data()), size))
    throw Error(ErrorCategory::io, "read failed: " + path.string());
  return deserialize(bytes, path.string());
}

}  // namespace ptlab
