#include "beat/dataset_io.hpp"

#include <fstream>
#include <sstream>

#include "beat/error.hpp"

namespace beat {

namespace {

constexpr const char* kFormat = "beat-dataset";
constexpr int kVersion = 1;

Split split_from_string(const std::string& s, std::size_t line) {
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  throw ParseError("unknown split '" + s + "'", line, 0);
}

nlohmann::json parse_line(const std::string& text, std::size_t line) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what(), line, e.byte);
  }
}

}  // namespace

std::string dataset_to_jsonl(const Dataset& dataset) {
  dataset.validate();
  std::ostringstream os;
  nlohmann::json header = {{"format", kFormat},
                           {"version", kVersion},
                           {"split", to_string(dataset.split)},
                           {"class_count", dataset.class_count},
                           {"frames", dataset.frames},
                           {"sample_count", dataset.samples.size()},
                           {"topology", dataset.topology->to_json()}};
  os << header.dump() << '\n';
  for (const auto& s : dataset.samples) {
    nlohmann::json row = {{"label", s.label}, {"positions", s.motion.positions().values()}};
    os << row.dump() << '\n';
  }
  return os.str();
}

Dataset dataset_from_jsonl(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(is, line)) throw ParseError("empty dataset file", 1, 0);
  ++lineno;
  const nlohmann::json header = parse_line(line, lineno);
  Dataset ds;
  std::size_t expected = 0;
  try {
    if (header.at("format").get<std::string>() != kFormat)
      throw ParseError("not a beat-dataset file", lineno, 0);
    if (header.at("version").get<int>() != kVersion)
      throw ParseError("unsupported dataset version " + header.at("version").dump(), lineno, 0);
    ds.split = split_from_string(header.at("split").get<std::string>(), lineno);
    ds.class_count = header.at("class_count").get<std::size_t>();
    ds.frames = header.at("frames").get<std::size_t>();
    expected = header.at("sample_count").get<std::size_t>();
    ds.topology = std::make_shared<const SkeletonTopology>(SkeletonTopology::from_json(header.at("topology")));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad header: ") + e.what(), lineno, 0);
  } catch (const ConfigError& e) {
    throw ParseError(std::string("bad header: ") + e.what(), lineno, 0);
  }
  const std::size_t per_sample = ds.frames * ds.topology->joint_count() * 3;
  std::size_t offset = line.size() + 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) {
      offset += 1;
      continue;
    }
    const nlohmann::json row = parse_line(line, lineno);
    int label = 0;
    std::vector<double> pos;
    try {
      label = row.at("label").get<int>();
      pos = row.at("positions").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("bad sample: ") + e.what(), lineno, offset);
    }
    if (label < 0 || static_cast<std::size_t>(label) >= ds.class_count)
      throw ParseError("label " + std::to_string(label) + " outside [0," + std::to_string(ds.class_count) + ")",
                       lineno, offset);
    if (pos.size() != per_sample)
      throw ParseError("expected " + std::to_string(per_sample) + " coordinates, got " +
                           std::to_string(pos.size()),
                       lineno, offset);
    ds.samples.push_back(
        {Motion(ds.topology, Tensor({ds.frames, ds.topology->joint_count(), 3}, std::move(pos))), label});
    offset += line.size() + 1;
  }
  if (ds.samples.size() != expected)
    throw ParseError("header declares " + std::to_string(expected) + " samples, found " +
                         std::to_string(ds.samples.size()),
                     lineno, offset);
  return ds;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

void dataset_save(const std::filesystem::path& path, const Dataset& dataset) {
  write_text_file(path, dataset_to_jsonl(dataset));
}

Dataset dataset_load(const std::filesystem::path& path) { return dataset_from_jsonl(read_text_file(path)); }

void topology_save(const std::filesystem::path& path, const SkeletonTopology& topology) {
  write_text_file(path, topology.to_json().dump(2) + "\n");
}

SkeletonTopology topology_load(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("invalid topology JSON: ") + e.what(), 1, e.byte);
  }
  return SkeletonTopology::from_json(doc);
}

}  // namespace beat
