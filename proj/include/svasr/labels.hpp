#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace svasr {

/// Times are in 100 ns units, the convention of HTK label files.
struct Label {
  std::int64_t start = 0;
  std::int64_t end = 0;
  std::string name;

  bool operator==(const Label&) const = default;
};

using LabelSequence = std::vector<Label>;

/// Throws DomainError unless labels satisfy 0 <= start < end, time-ordered, non-overlapping.
void validate_labels(const LabelSequence& labels);

/// One "start end name" line per label.
LabelSequence read_labels(const std::filesystem::path& path);
void write_labels(const LabelSequence& labels, const std::filesystem::path& path);

}  // namespace svasr
