#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gsco/error.hpp"

namespace gsco {

// Task family of one evaluation item. The variant decides which prompt
// template and which metric family apply downstream.
enum class TaskKind {
  ClsBinary,
  ClsMulticlass,
  ClsMultilabel,
  VqaClosed,
  VqaOpen,
  Mrg,
};

inline bool is_classification(TaskKind kind) {
  return kind == TaskKind::ClsBinary || kind == TaskKind::ClsMulticlass ||
         kind == TaskKind::ClsMultilabel;
}

inline bool is_vqa(TaskKind kind) {
  return kind == TaskKind::VqaClosed || kind == TaskKind::VqaOpen;
}

inline std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::ClsBinary: return "cls-binary";
    case TaskKind::ClsMulticlass: return "cls-multiclass";
    case TaskKind::ClsMultilabel: return "cls-multilabel";
    case TaskKind::VqaClosed: return "vqa-closed";
    case TaskKind::VqaOpen: return "vqa-open";
    case TaskKind::Mrg: return "mrg";
  }
  return "unknown";
}

inline std::optional<TaskKind> task_kind_from_string(std::string_view name) {
  if (name == "cls-binary") return TaskKind::ClsBinary;
  if (name == "cls-multiclass") return TaskKind::ClsMulticlass;
  if (name == "cls-multilabel") return TaskKind::ClsMultilabel;
  if (name == "vqa-closed") return TaskKind::VqaClosed;
  if (name == "vqa-open") return TaskKind::VqaOpen;
  if (name == "mrg") return TaskKind::Mrg;
  return std::nullopt;
}

namespace detail {

inline bool is_ascii_space(char32_t cp) {
  return cp == U' ' || cp == U'\t' || cp == U'\n' || cp == U'\r' || cp == U'\f' || cp == U'\v';
}

// Decodes one UTF-8 sequence starting at `i`; malformed bytes pass through
// one at a time so the function stays total.
inline char32_t decode_utf8(std::string_view s, std::size_t& i) {
  unsigned char c0 = static_cast<unsigned char>(s[i]);
  if (c0 < 0x80) {
    ++i;
    return c0;
  }
  auto cont = [&](std::size_t off) {
    return i + off < s.size() && (static_cast<unsigned char>(s[i + off]) & 0xC0) == 0x80;
  };
  if ((c0 & 0xE0) == 0xC0 && cont(1)) {
    char32_t cp = (c0 & 0x1Fu) << 6 | (static_cast<unsigned char>(s[i + 1]) & 0x3Fu);
    i += 2;
    return cp;
  }
  if ((c0 & 0xF0) == 0xE0 && cont(1) && cont(2)) {
    char32_t cp = (c0 & 0x0Fu) << 12 | (static_cast<unsigned char>(s[i + 1]) & 0x3Fu) << 6 |
                  (static_cast<unsigned char>(s[i + 2]) & 0x3Fu);
    i += 3;
    return cp;
  }
  if ((c0 & 0xF8) == 0xF0 && cont(1) && cont(2) && cont(3)) {
    char32_t cp = (c0 & 0x07u) << 18 | (static_cast<unsigned char>(s[i + 1]) & 0x3Fu) << 12 |
                  (static_cast<unsigned char>(s[i + 2]) & 0x3Fu) << 6 |
                  (static_cast<unsigned char>(s[i + 3]) & 0x3Fu);
    i += 4;
    return cp;
  }
  ++i;
  return c0;
}

inline void encode_utf8(char32_t cp, std::string& out) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

inline char32_t lowercase_cp(char32_t cp) {
  if (cp >= U'A' && cp <= U'Z') return cp + 0x20;
  // Latin-1 uppercase block, skipping the multiplication sign.
  if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 0x20;
  switch (cp) {
    case 0x010C: return 0x010D;  // caron C
    case 0x0160: return 0x0161;  // caron S
    case 0x017D: return 0x017E;  // caron Z
    default: return cp;
  }
}

// Canonical composition for the Latin repertoire that actually shows up in
// label text (diacritics on vowels, n, c, s, y, z). Everything outside this
// table passes through decomposed.
inline char32_t compose_latin(char32_t base, char32_t mark) {
  switch (mark) {
    case 0x0300:  // grave
      switch (base) {
        case U'a': return 0xE0;
        case U'e': return 0xE8;
        case U'i': return 0xEC;
        case U'o': return 0xF2;
        case U'u': return 0xF9;
      }
      break;
    case 0x0301:  // acute
      switch (base) {
        case U'a': return 0xE1;
        case U'e': return 0xE9;
        case U'i': return 0xED;
        case U'o': return 0xF3;
        case U'u': return 0xFA;
        case U'y': return 0xFD;
      }
      break;
    case 0x0302:  // circumflex
      switch (base) {
        case U'a': return 0xE2;
        case U'e': return 0xEA;
        case U'i': return 0xEE;
        case U'o': return 0xF4;
        case U'u': return 0xFB;
      }
      break;
    case 0x0303:  // tilde
      switch (base) {
        case U'a': return 0xE3;
        case U'n': return 0xF1;
        case U'o': return 0xF5;
      }
      break;
    case 0x0308:  // diaeresis
      switch (base) {
        case U'a': return 0xE4;
        case U'e': return 0xEB;
        case U'i': return 0xEF;
        case U'o': return 0xF6;
        case U'u': return 0xFC;
        case U'y': return 0xFF;
      }
      break;
    case 0x030A:  // ring above
      if (base == U'a') return 0xE5;
      break;
    case 0x030C:  // caron
      switch (base) {
        case U'c': return 0x010D;
        case U's': return 0x0161;
        case U'z': return 0x017E;
      }
      break;
    case 0x0327:  // cedilla
      if (base == U'c') return 0xE7;
      break;
  }
  return 0;
}

}  // namespace detail

// Canonical form used whenever generator text is matched against a label
// vocabulary: compose Latin diacritics, lowercase, collapse whitespace runs,
// and strip trailing whitespace/periods. Total and idempotent.
inline std::string normalize_label(std::string_view text) {
  std::vector<char32_t> cps;
  cps.reserve(text.size());
  for (std::size_t i = 0; i < text.size();) {
    char32_t cp = detail::lowercase_cp(detail::decode_utf8(text, i));
    if (!cps.empty()) {
      if (char32_t composed = detail::compose_latin(cps.back(), cp); composed != 0) {
        cps.back() = composed;
        continue;
      }
    }
    cps.push_back(cp);
  }

  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char32_t cp : cps) {
    if (detail::is_ascii_space(cp)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    detail::encode_utf8(cp, out);
  }
  while (!out.empty() && (out.back() == '.' || out.back() == ' ')) {
    out.pop_back();
  }
  return out;
}

// Ordered label vocabulary for one classification task. Immutable after
// construction; normalized forms are precomputed and pairwise distinct.
class LabelSet {
 public:
  explicit LabelSet(std::vector<std::string> labels,
                    std::optional<std::size_t> negative_label = std::nullopt)
      : labels_(std::move(labels)), negative_(negative_label) {
    if (labels_.empty()) {
      throw ValidationError("label set must not be empty");
    }
    normalized_.reserve(labels_.size());
    for (const auto& label : labels_) {
      std::string norm = normalize_label(label);
      for (std::size_t j = 0; j < normalized_.size(); ++j) {
        if (normalized_[j] == norm) {
          throw ValidationError("labels \"" + labels_[j] + "\" and \"" + label +
                                "\" normalize to the same form \"" + norm + "\"");
        }
      }
      normalized_.push_back(std::move(norm));
    }
    if (negative_ && *negative_ >= labels_.size()) {
      throw ValidationError("negative_label index " + std::to_string(*negative_) +
                            " out of range");
    }
  }

  std::size_t size() const { return labels_.size(); }
  const std::vector<std::string>& labels() const { return labels_; }
  const std::string& display(std::size_t i) const { return labels_.at(i); }
  const std::string& normalized(std::size_t i) const { return normalized_.at(i); }
  std::optional<std::size_t> negative_label() const { return negative_; }

  // Index of the label whose normalized form equals normalize_label(text).
  std::optional<std::size_t> find(std::string_view text) const {
    std::string norm = normalize_label(text);
    for (std::size_t i = 0; i < normalized_.size(); ++i) {
      if (normalized_[i] == norm) return i;
    }
    return std::nullopt;
  }

 private:
  std::vector<std::string> labels_;
  std::vector<std::string> normalized_;
  std::optional<std::size_t> negative_;
};

// One evaluation item. `image_ref` is opaque; only backends interpret it.
struct Sample {
  std::string id;
  std::string image_ref;
  std::string modality;
  TaskKind task = TaskKind::ClsBinary;
  std::vector<std::size_t> truth_labels;      // classification ground truth
  std::optional<std::string> question;        // vqa-*
  std::optional<std::string> reference_text;  // vqa answer or mrg report
};

// One specialist's answer for one sample.
struct SpecialistPrediction {
  std::string specialist_id;
  std::vector<std::size_t> labels;
  std::optional<std::vector<double>> scores;  // aligned with labels when present
};

// Final output of one inference run over one sample. Exactly one of
// predicted_labels / generated_text carries the answer depending on the task;
// raw_text always keeps the full generator output.
struct Diagnosis {
  std::string sample_id;
  std::vector<std::size_t> predicted_labels;
  std::string generated_text;
  std::string raw_text;
  std::optional<std::string> context_moed;
  std::optional<std::string> context_rad;
  bool parse_warning = false;
};

}  // namespace gsco
