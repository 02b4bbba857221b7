#pragma once

#include "dro/common.hpp"

#include <vector>

namespace dro {

/**
 * Dense training set: one feature row per sample plus an integer label.
 * Labels are either binary (-1/+1) or class indices 0..K-1.
 */
struct Dataset {
    RowMat features;          // n x d
    std::vector<int> labels;  // length n

    int n() const { return static_cast<int>(features.rows()); }
    int d() const { return static_cast<int>(features.cols()); }

    bool labels_are_binary() const {
        for (int y : labels)
            if (y != -1 && y != 1) return false;
        return !labels.empty();
    }

    /// Checks shape and finiteness; throws DataError on violation.
    void validate() const;
};

inline void Dataset::validate() const {
    if (features.rows() < 1 || features.cols() < 1)
        throw DataError("dataset must have n >= 1 samples and d >= 1 features");
    if (static_cast<int>(labels.size()) != n())
        throw DataError("label count does not match sample count");
    if (!features.allFinite())
        throw DataError("dataset contains non-finite feature values");
}

/// Maps a stored label to a class index in [0, classes). Binary -1/+1 labels
/// are accepted for classes == 2 and map to 0/1.
inline int class_index(int label, int classes) {
    if (classes == 2 && (label == -1 || label == 1)) return label == 1 ? 1 : 0;
    if (label < 0 || label >= classes)
        throw DataError("label " + std::to_string(label) + " outside 0.." +
                        std::to_string(classes - 1));
    return label;
}

}  // namespace dro
