#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "grhd/dataset/wav.hpp"

namespace grhd::dataset {

// All clips of one machine type under data_dir, train then test, each in
// filename order. Uses data_dir/manifest.csv when present (rows of other
// machines are ignored); otherwise scans data_dir/<machine>/{train,test}.
// The returned paths are loaded by load_machine_corpus.
std::vector<std::filesystem::path> list_machine_clips(const std::filesystem::path& data_dir,
                                                      const std::string& machine);

std::vector<AudioClip> load_machine_corpus(const std::filesystem::path& data_dir, const std::string& machine);

}  // namespace grhd::dataset
