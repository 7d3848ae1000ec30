#pragma once

#include <filesystem>
#include <string>

#include "beat/skeleton.hpp"

namespace beat {

// JSON-lines dataset format. Line 1 is a header
//   {"format":"beat-dataset","version":1,"split":..,"class_count":C,"frames":M,
//    "sample_count":n,"topology":{...}}
// followed by one {"label":y,"positions":[M*J*3 numbers]} object per sample.
// Doubles are printed in shortest round-trip form, so save -> load -> save is
// byte-identical.
std::string dataset_to_jsonl(const Dataset& dataset);
Dataset dataset_from_jsonl(const std::string& text);

void dataset_save(const std::filesystem::path& path, const Dataset& dataset);
Dataset dataset_load(const std::filesystem::path& path);

void topology_save(const std::filesystem::path& path, const SkeletonTopology& topology);
SkeletonTopology topology_load(const std::filesystem::path& path);

// Whole-file helpers shared by the other persistence code.
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace beat
