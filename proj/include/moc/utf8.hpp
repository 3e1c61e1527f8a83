#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

// Minimal UTF-8 helpers. Offsets are always byte offsets; "length" in the rest
// of the library means code points.
namespace moc::utf8 {

bool is_valid(std::string_view s) noexcept;

// True when `offset` starts a code point (or equals s.size()).
bool is_boundary(std::string_view s, std::size_t offset) noexcept;

// Byte length of the code point starting at s[offset]; 1 for stray bytes.
std::size_t sequence_length(std::string_view s, std::size_t offset) noexcept;

// Decodes one code point and advances `offset`. Invalid bytes decode as
// U+FFFD and consume one byte.
char32_t next(std::string_view s, std::size_t& offset) noexcept;

std::size_t length(std::string_view s) noexcept;

std::u32string decode(std::string_view s);
std::string encode(std::u32string_view s);
void append(std::string& out, char32_t cp);

// Byte offset of every code point start plus s.size() as the final entry.
std::vector<std::size_t> char_offsets(std::string_view s);

// Byte offset after advancing `count` code points from `from` (clamped).
std::size_t advance(std::string_view s, std::size_t from,
                    std::size_t count) noexcept;

// Largest boundary <= offset.
std::size_t floor_boundary(std::string_view s, std::size_t offset) noexcept;

bool is_space(char32_t cp) noexcept;

}  // namespace moc::utf8
