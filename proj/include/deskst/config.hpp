/* DeskST - a desk-scale end-to-end speech translation toolkit.
 * Copyright (C) 2026 DeskST Authors. All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef DESKST_CONFIG_HPP_
#define DESKST_CONFIG_HPP_

#include <map>
#include <string>

namespace deskst {

// Flat UTF-8 key=value files: one pair per line, '#' starts a comment,
// blank lines ignored. Used for train configs and checkpoint sidecars.

std::map<std::string, std::string> read_kv_file(const std::string& path);
std::map<std::string, std::string> parse_kv_text(const std::string& text);
void write_kv_file(const std::string& path,
                   const std::map<std::string, std::string>& kv);

}  // namespace deskst

#endif  // DESKST_CONFIG_HPP_
