#include "psc/matrix.hpp"

#include "psc/errors.hpp"

namespace psc {

Matrix matmul(const Matrix &a, const Matrix &b)
{
	if (a.cols != b.rows) {
		throw ShapeMismatch("matmul " + std::to_string(a.rows) + "x" + std::to_string(a.cols) + " by " +
				    std::to_string(b.rows) + "x" + std::to_string(b.cols));
	}
	Matrix out(a.rows, b.cols);
	for (size_t i = 0; i < a.rows; ++i) {
		for (size_t k = 0; k < a.cols; ++k) {
			double v = a.at(i, k);
			if (v == 0.0) {
				continue;
			}
			for (size_t j = 0; j < b.cols; ++j) {
				out.at(i, j) += v * b.at(k, j);
			}
		}
	}
	return out;
}

Matrix matmul_at_b(const Matrix &a, const Matrix &b)
{
	if (a.rows != b.rows) {
		throw ShapeMismatch("matmul_at_b " + std::to_string(a.rows) + "x" + std::to_string(a.cols) + " by " +
				    std::to_string(b.rows) + "x" + std::to_string(b.cols));
	}
	Matrix out(a.cols, b.cols);
	for (size_t k = 0; k < a.rows; ++k) {
		for (size_t i = 0; i < a.cols; ++i) {
			double v = a.at(k, i);
			if (v == 0.0) {
				continue;
			}
			for (size_t j = 0; j < b.cols; ++j) {
				out.at(i, j) += v * b.at(k, j);
			}
		}
	}
	return out;
}

Matrix matmul_a_bt(const Matrix &a, const Matrix &b)
{
	if (a.cols != b.cols) {
		throw ShapeMismatch("matmul_a_bt " + std::to_string(a.rows) + "x" + std::to_string(a.cols) + " by " +
				    std::to_string(b.rows) + "x" + std::to_string(b.cols));
	}
	Matrix out(a.rows, b.rows);
	for (size_t i = 0; i < a.rows; ++i) {
		for (size_t j = 0; j < b.rows; ++j) {
			double sum = 0;
			for (size_t k = 0; k < a.cols; ++k) {
				sum += a.at(i, k) * b.at(j, k);
			}
			out.at(i, j) = sum;
		}
	}
	return out;
}

} // namespace psc
