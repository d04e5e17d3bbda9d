// Copyright 2025 The codeclm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace codeclm {

// Dense row-major matrix. The only container the math layer uses.
template <typename S>
class Mat {
public:
    Mat() = default;
    Mat(int rows, int cols) : rows_(rows), cols_(cols), data_((size_t)rows * cols, S(0)) {}

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    S* data() { return data_.data(); }
    const S* data() const { return data_.data(); }

    S& operator()(int r, int c) {
        assert(r >= 0 && r < rows_ && c >= 0 && c < cols_);
        return data_[(size_t)r * cols_ + c];
    }
    S operator()(int r, int c) const {
        assert(r >= 0 && r < rows_ && c >= 0 && c < cols_);
        return data_[(size_t)r * cols_ + c];
    }

    std::span<S> row(int r) {
        assert(r >= 0 && r < rows_);
        return {data_.data() + (size_t)r * cols_, (size_t)cols_};
    }
    std::span<const S> row(int r) const {
        assert(r >= 0 && r < rows_);
        return {data_.data() + (size_t)r * cols_, (size_t)cols_};
    }

    void fill(S v) { std::fill(data_.begin(), data_.end(), v); }
    void resize(int rows, int cols) {
        rows_ = rows;
        cols_ = cols;
        data_.assign((size_t)rows * cols, S(0));
    }
    // Reshape without clearing retained storage. For buffers whose every
    // element is overwritten right after (GEMM outputs, copy targets); only
    // newly grown storage is zero-initialized.
    void resize_uninit(int rows, int cols) {
        rows_ = rows;
        cols_ = cols;
        data_.resize((size_t)rows * cols);
    }

    bool operator==(const Mat& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
    }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<S> data_;
};

}  // namespace codeclm
