#include "svasr/labels.hpp"

#include <fstream>
#include <sstream>

#include "svasr/error.hpp"
#include "svasr/util.hpp"

namespace svasr {

void validate_labels(const LabelSequence& labels) {
  std::int64_t previous_end = 0;
  for (const Label& l : labels) {
    if (l.start < 0 || l.start >= l.end)
      throw DomainError("label '" + l.name + "' has an empty or negative span");
    if (l.start < previous_end) throw DomainError("label '" + l.name + "' overlaps its predecessor");
    previous_end = l.end;
  }
}

LabelSequence read_labels(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  LabelSequence labels;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto tokens = split_whitespace(line);
    if (tokens.empty() || tokens[0] == ".") continue;
    if (tokens.size() < 3)
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected 'start end name'");
    try {
      labels.push_back({std::stoll(tokens[0]), std::stoll(tokens[1]), tokens[2]});
    } catch (const std::logic_error&) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": bad time value");
    }
  }
  validate_labels(labels);
  return labels;
}

void write_labels(const LabelSequence& labels, const std::filesystem::path& path) {
  std::ostringstream out;
  for (const Label& l : labels) out << l.start << ' ' << l.end << ' ' << l.name << '\n';
  write_text_file(path, out.str());
}

}  // namespace svasr
