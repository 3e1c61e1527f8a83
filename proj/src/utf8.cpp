#include "moc/utf8.hpp"

namespace moc::utf8 {
namespace {

bool is_continuation(unsigned char c) { return (c & 0xC0) == 0x80; }

}  // namespace

std::size_t sequence_length(std::string_view s, std::size_t offset) noexcept {
  const auto lead = static_cast<unsigned char>(s[offset]);
  std::size_t len = 1;
  if (lead >= 0xF0 && lead <= 0xF4) {
    len = 4;
  } else if (lead >= 0xE0) {
    len = 3;
  } else if (lead >= 0xC2 && lead <= 0xDF) {
    len = 2;
  }
  if (len == 1 || lead >= 0xF5) return 1;
  if (offset + len > s.size()) return 1;
  for (std::size_t k = 1; k < len; ++k) {
    if (!is_continuation(static_cast<unsigned char>(s[offset + k]))) return 1;
  }
  return len;
}

char32_t next(std::string_view s, std::size_t& offset) noexcept {
  const auto lead = static_cast<unsigned char>(s[offset]);
  const std::size_t len = sequence_length(s, offset);
  if (len == 1) {
    ++offset;
    return lead < 0x80 ? char32_t(lead) : char32_t(0xFFFD);
  }
  char32_t cp = lead & (0xFF >> (len + 1));
  for (std::size_t k = 1; k < len; ++k) {
    cp = (cp << 6) | (static_cast<unsigned char>(s[offset + k]) & 0x3F);
  }
  offset += len;
  return cp;
}

bool is_valid(std::string_view s) noexcept {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto lead = static_cast<unsigned char>(s[i]);
    if (lead < 0x80) {
      ++i;
      continue;
    }
    const std::size_t len = sequence_length(s, i);
    if (len == 1) return false;
    std::size_t probe = i;
    const char32_t cp = next(s, probe);
    // Reject overlong forms and surrogates.
    if ((len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000) ||
        (cp >= 0xD800 && cp <= 0xDFFF) || cp > 0x10FFFF) {
      return false;
    }
    i = probe;
  }
  return true;
}

bool is_boundary(std::string_view s, std::size_t offset) noexcept {
  if (offset == 0 || offset == s.size()) return true;
  if (offset > s.size()) return false;
  return !is_continuation(static_cast<unsigned char>(s[offset]));
}

std::size_t length(std::string_view s) noexcept {
  std::size_t n = 0;
  for (std::size_t i = 0; i < s.size(); i += sequence_length(s, i)) ++n;
  return n;
}

std::u32string decode(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) out.push_back(next(s, i));
  return out;
}

void append(std::string& out, char32_t cp) {
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

std::string encode(std::u32string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char32_t cp : s) append(out, cp);
  return out;
}

std::vector<std::size_t> char_offsets(std::string_view s) {
  std::vector<std::size_t> offsets;
  offsets.reserve(s.size() + 1);
  for (std::size_t i = 0; i < s.size(); i += sequence_length(s, i)) {
    offsets.push_back(i);
  }
  offsets.push_back(s.size());
  return offsets;
}

std::size_t advance(std::string_view s, std::size_t from,
                    std::size_t count) noexcept {
  std::size_t i = from;
  while (count > 0 && i < s.size()) {
    i += sequence_length(s, i);
    --count;
  }
  return i;
}

std::size_t floor_boundary(std::string_view s, std::size_t offset) noexcept {
  if (offset >= s.size()) return s.size();
  while (offset > 0 && !is_boundary(s, offset)) --offset;
  return offset;
}

bool is_space(char32_t cp) noexcept {
  switch (cp) {
    case U' ':
    case U'\t':
    case U'\n':
    case U'\r':
    case U'\v':
    case U'\f':
    case 0x00A0:
    case 0x3000:
      return true;
    default:
      return false;
  }
}

}  // namespace moc::utf8
