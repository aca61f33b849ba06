#include "dermamap/dataset_io.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace dermamap {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'D', 'M', 'D', 'S'};

std::vector<uint8_t> zlib_compress(const std::vector<uint8_t>& raw) {
  uLongf bound = compressBound(uLong(raw.size()));
  std::vector<uint8_t> out(bound);
  const int rc = compress2(out.data(), &bound, raw.data(), uLong(raw.size()),
                           Z_BEST_SPEED);
  require(rc == Z_OK, "dataset serialize: zlib compression failed");
  out.resize(bound);
  return out;
}

std::vector<uint8_t> zlib_decompress(const uint8_t* data, size_t len, size_t raw_len,
                                     const std::string& where) {
  std::vector<uint8_t> out(raw_len);
  uLongf out_len = uLongf(raw_len);
  const int rc = uncompress(out.data(), &out_len, data, uLong(len));
  require(rc == Z_OK && out_len == raw_len,
          "dataset load: corrupt pixel blob in " + where);
  return out;
}

template <class T>
void write_le(std::ostream& os, T v) {
  uint8_t buf[sizeof(T)];
  for (size_t i = 0; i < sizeof(T); ++i) buf[i] = uint8_t(uint64_t(v) >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <class T>
T read_le(std::istream& is, const std::string& what) {
  uint8_t buf[sizeof(T)];
  is.read(reinterpret_cast<char*>(buf), sizeof(T));
  require(is.gcount() == std::streamsize(sizeof(T)),
          "dataset load: truncated file while reading " + what);
  uint64_t v = 0;
  for (size_t i = 0; i < sizeof(T); ++i) v |= uint64_t(buf[i]) << (8 * i);
  return T(v);
}

}  // namespace

void serialize_dataset(const Dataset& ds, const std::string& path) {
  std::string index;
  std::string blobs;
  uint64_t offset = 0;
  for (size_t i = 0; i < ds.records.size(); ++i) {
    const DatasetRecord& rec = ds.records[i];
    const auto compressed = zlib_compress(rec.image.pixels.data);

    json line;
    line["record"] = i;
    line["panelist"] = rec.image.panelist_id;
    line["modality"] = to_string(rec.image.modality);
    line["lighting"] = to_string(rec.image.lighting);
    line["angle"] = to_string(rec.image.angle);
    line["rows"] = rec.image.pixels.rows;
    line["cols"] = rec.image.pixels.cols;
    line["offset"] = offset;
    line["compressed"] = compressed.size();
    line["raw"] = rec.image.pixels.data.size();
    json anchors = json::array();
    for (const auto& [d, p] : rec.anchors.entries)
      anchors.push_back({d, p.r, p.c});
    line["anchors"] = anchors;
    json labels = json::array();
    for (const auto& [d, m] : rec.labels)
      labels.push_back({d, to_string(m.kind), m.value});
    line["labels"] = labels;

    index += line.dump();
    index += '\n';
    blobs.append(reinterpret_cast<const char*>(compressed.data()), compressed.size());
    offset += compressed.size();
  }

  std::ofstream os(path, std::ios::binary);
  require(bool(os), "dataset serialize: cannot open " + path);
  os.write(kMagic, 4);
  write_le<uint32_t>(os, kDatasetFormatVersion);
  write_le<uint64_t>(os, index.size());
  os.write(index.data(), std::streamsize(index.size()));
  os.write(blobs.data(), std::streamsize(blobs.size()));
  require(bool(os), "dataset serialize: write failed: " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(bool(is), "dataset load: cannot open " + path);

  char magic[4];
  is.read(magic, 4);
  require(is.gcount() == 4 && std::memcmp(magic, kMagic, 4) == 0,
          "dataset load: bad magic (not a dataset container): " + path);
  const auto version = read_le<uint32_t>(is, "version");
  require(version == kDatasetFormatVersion,
          "dataset load: unsupported container version " + std::to_string(version));
  const auto index_len = read_le<uint64_t>(is, "index length");

  std::string index(index_len, '\0');
  is.read(index.data(), std::streamsize(index_len));
  require(uint64_t(is.gcount()) == index_len,
          "dataset load: truncated file while reading index");

  std::string blobs((std::istreambuf_iterator<char>(is)),
                    std::istreambuf_iterator<char>());

  Dataset ds;
  std::istringstream lines(index);
  std::string line;
  size_t line_no = 0;
  while (std::getline(lines, line)) {
    const std::string where = "record " + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail("dataset load: malformed index line at " + where + ": " + e.what());
    }
    try {
      DatasetRecord rec;
      rec.image.panelist_id = j.at("panelist").get<std::string>();
      rec.image.modality = modality_from_string(j.at("modality").get<std::string>());
      rec.image.lighting = lighting_from_string(j.at("lighting").get<std::string>());
      rec.image.angle = angle_from_string(j.at("angle").get<std::string>());
      const int rows = j.at("rows").get<int>();
      const int cols = j.at("cols").get<int>();
      const uint64_t offset = j.at("offset").get<uint64_t>();
      const uint64_t comp_len = j.at("compressed").get<uint64_t>();
      const uint64_t raw_len = j.at("raw").get<uint64_t>();
      require(raw_len == uint64_t(rows) * uint64_t(cols) * 3,
              "dataset load: raw length mismatch in " + where);
      require(offset + comp_len <= blobs.size(),
              "dataset load: blob out of range (truncated file?) in " + where);
      rec.image.pixels.rows = rows;
      rec.image.pixels.cols = cols;
      rec.image.pixels.data = zlib_decompress(
          reinterpret_cast<const uint8_t*>(blobs.data()) + offset, comp_len,
          raw_len, where);
      for (const auto& a : j.at("anchors")) {
        rec.anchors.entries[a.at(0).get<int>()] =
            Point2{a.at(1).get<double>(), a.at(2).get<double>()};
      }
      for (const auto& l : j.at("labels")) {
        Measurement m;
        m.kind = metric_kind_from_string(l.at(1).get<std::string>());
        m.value = l.at(2).get<double>();
        rec.labels[l.at(0).get<int>()] = m;
      }
      ds.records.push_back(std::move(rec));
    } catch (const json::exception& e) {
      fail("dataset load: invalid field in " + where + ": " + e.what());
    }
    ++line_no;
  }
  return ds;
}

}  // namespace dermamap
