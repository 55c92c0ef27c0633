/*
 * Copyright 2026 The pdforge Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef PDFORGE_HASH_HPP
#define PDFORGE_HASH_HPP

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace pdforge {

// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(const unsigned char *data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view bytes) {
  return fnv1a64(reinterpret_cast<const unsigned char *>(bytes.data()), bytes.size());
}

} // namespace pdforge

#endif // PDFORGE_HASH_HPP
