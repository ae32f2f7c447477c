// SPDX-License-Identifier: Apache-2.0
//
// Named prompt templates with {placeholder} substitution. Defaults are
// compiled in; a directory of <name>.txt files overrides them by name.

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace lcdoc {

class PromptLibrary {
public:
  static PromptLibrary defaults();

  /// Replaces every template that has a matching <name>.txt in `dir`.
  /// Unknown file names are rejected so typos do not go unnoticed.
  void load_overrides(const std::filesystem::path& dir);

  const std::string& raw(const std::string& name) const;
  std::vector<std::string> names() const;

  /// fmt-style named substitution; literal braces are written {{ and }}.
  std::string render(const std::string& name,
                     const std::map<std::string, std::string>& values) const;

private:
  std::map<std::string, std::string> templates_;
};

/// Process-wide library used by the pipelines. Replace it before starting
/// workers; it is read concurrently afterwards.
const PromptLibrary& prompts();
void set_prompts(PromptLibrary library);

}  // namespace lcdoc
