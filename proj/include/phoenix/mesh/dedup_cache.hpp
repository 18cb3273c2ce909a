// SPDX-License-Identifier: Apache-2.0
/*
Copyright (C) 2026 The Phoenix Authors.
Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

#pragma once

#include <cstddef>
#include <list>
#include <map>

namespace phoenix::mesh {

// Bounded LRU set. insert() reports whether the key was new; a repeated key is
// moved to the most-recently-used position.
template <typename Key>
class LruSet {
 public:
  explicit LruSet(std::size_t capacity) : capacity_(capacity) {}

  bool insert(const Key& k) {
    auto it = index_.find(k);
    if (it != index_.end()) {
      order_.splice(order_.begin(), order_, it->second);
      return false;
    }
    order_.push_front(k);
    index_.emplace(k, order_.begin());
    if (order_.size() > capacity_) {
      index_.erase(order_.back());
      order_.pop_back();
    }
    return true;
  }

  bool contains(const Key& k) const { return index_.count(k) != 0; }
  std::size_t size() const { return order_.size(); }
  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  std::list<Key> order_;
  std::map<Key, typename std::list<Key>::iterator> index_;
};

}  // namespace phoenix::mesh
