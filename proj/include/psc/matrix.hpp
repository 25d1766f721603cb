#pragma once

#include <cstddef>
#include <vector>

namespace psc {

/// Dense row-major matrix of doubles; just enough linear algebra for the
/// graph network and its explainer.
struct Matrix {
	size_t rows = 0;
	size_t cols = 0;
	std::vector<double> data;

	Matrix() = default;
	Matrix(size_t r, size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

	double &at(size_t r, size_t c) { return data[r * cols + c]; }
	double at(size_t r, size_t c) const { return data[r * cols + c]; }

	bool operator==(const Matrix &) const = default;
};

/// A·B; dimensions must agree.
Matrix matmul(const Matrix &a, const Matrix &b);

/// Aᵀ·B without materializing the transpose.
Matrix matmul_at_b(const Matrix &a, const Matrix &b);

/// A·Bᵀ without materializing the transpose.
Matrix matmul_a_bt(const Matrix &a, const Matrix &b);

} // namespace psc
