#pragma once

#include <array>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "gsco/domain.hpp"
#include "gsco/error.hpp"

namespace gsco {

// Placeholder -> substitution text. Values must not themselves contain
// placeholder syntax.
using PromptBindings = std::map<std::string, std::string>;

inline constexpr std::array<std::string_view, 10> kTemplateIds = {
    "CLS", "MRG", "VQA", "DGB", "DGB-INSTRUCT", "DES", "GSCO-0", "GSCO-1", "GSCO-2", "GSCO-3"};

inline constexpr std::array<std::string_view, 6> kPlaceholderNames = {
    "Modality", "Label Set", "Question", "Disease", "RAD", "MoED"};

struct PromptTemplate {
  std::string id;
  std::string body;                       // '\n' line breaks, no trailing newline
  std::vector<std::string> placeholders;  // distinct names occurring in body
};

namespace detail {

inline bool is_known_placeholder(std::string_view name) {
  for (auto known : kPlaceholderNames) {
    if (name == known) return true;
  }
  return false;
}

// Canonical template form: CRLF -> LF, per-line trailing whitespace stripped,
// no trailing newline at the end of the body.
inline std::string canonicalize_template(std::string_view raw) {
  std::string body;
  body.reserve(raw.size());
  std::string line;
  auto flush_line = [&] {
    while (!line.empty() && (line.back() == ' ' || line.back() == '\t' || line.back() == '\r')) {
      line.pop_back();
    }
    body += line;
    body.push_back('\n');
    line.clear();
  };
  for (char c : raw) {
    if (c == '\n') {
      flush_line();
    } else {
      line.push_back(c);
    }
  }
  if (!line.empty()) flush_line();
  while (!body.empty() && body.back() == '\n') {
    body.pop_back();
  }
  return body;
}

inline std::vector<std::string> scan_placeholders(const std::string& id, const std::string& body) {
  std::set<std::string> names;
  for (std::size_t i = 0; i < body.size();) {
    if (body[i] != '{') {
      ++i;
      continue;
    }
    std::size_t close = body.find('}', i);
    if (close == std::string::npos) {
      throw FormatError("template " + id + ": unterminated '{' at offset " + std::to_string(i));
    }
    std::string name = body.substr(i + 1, close - i - 1);
    if (!is_known_placeholder(name)) {
      throw FormatError("template " + id + ": unknown placeholder {" + name + "}");
    }
    names.insert(std::move(name));
    i = close + 1;
  }
  return {names.begin(), names.end()};
}

}  // namespace detail

// Display form of a label vocabulary inside a prompt: labels joined by ", ".
// The templates themselves carry the sentence-final period.
inline std::string format_label_set(const LabelSet& labels) {
  std::string out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (i > 0) out += ", ";
    out += labels.display(i);
  }
  return out;
}

// The ten instruction templates, loaded from one resource file per id.
// Rendering is flat placeholder substitution; no conditionals, no loops.
class PromptLibrary {
 public:
  static PromptLibrary load_dir(const std::string& dir) {
    PromptLibrary lib;
    for (auto id : kTemplateIds) {
      std::string path = dir + "/" + std::string(id) + ".txt";
      std::ifstream in(path, std::ios::binary);
      if (!in) {
        throw StorageError("cannot read template file \"" + path + "\"");
      }
      std::stringstream buffer;
      buffer << in.rdbuf();
      PromptTemplate tpl;
      tpl.id = std::string(id);
      tpl.body = detail::canonicalize_template(buffer.str());
      tpl.placeholders = detail::scan_placeholders(tpl.id, tpl.body);
      lib.templates_.emplace(tpl.id, std::move(tpl));
    }
    return lib;
  }

  const PromptTemplate& get(const std::string& template_id) const {
    auto it = templates_.find(template_id);
    if (it == templates_.end()) {
      throw UnknownTemplateError("unknown template id \"" + template_id + "\"");
    }
    return it->second;
  }

  // Pure substitution: every placeholder of the template must be bound and
  // the output contains no residual placeholder syntax.
  std::string render(const std::string& template_id, const PromptBindings& bindings) const {
    const PromptTemplate& tpl = get(template_id);
    for (const auto& [name, value] : bindings) {
      if (!detail::is_known_placeholder(name)) {
        throw ValidationError("unknown binding name \"" + name + "\"");
      }
      if (value.find('{') != std::string::npos) {
        throw ValidationError("binding \"" + name + "\" contains unresolved placeholder syntax");
      }
    }
    std::string out;
    out.reserve(tpl.body.size());
    for (std::size_t i = 0; i < tpl.body.size();) {
      if (tpl.body[i] != '{') {
        out.push_back(tpl.body[i]);
        ++i;
        continue;
      }
      std::size_t close = tpl.body.find('}', i);
      std::string name = tpl.body.substr(i + 1, close - i - 1);
      auto it = bindings.find(name);
      if (it == bindings.end()) {
        throw MissingBindingError(name);
      }
      out += it->second;
      i = close + 1;
    }
    return out;
  }

 private:
  std::map<std::string, PromptTemplate> templates_;
};

}  // namespace gsco
