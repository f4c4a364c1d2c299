"""Grouped k-fold splits that never separate members of a subject group."""

from __future__ import annotations


class SplitError(ValueError):
    pass


def grouped_kfold(subject_ids, group_size: int, n_folds: int):
    """Chunk subjects into consecutive groups, then hold out groups per fold.

    Returns a list of (train_subjects, test_subjects) tuples. Folds are
    disjoint in their test sets, cover every subject, and never split a
    group across train and test.
    """
    subjects = list(subject_ids)
    if group_size < 1 or n_folds < 1:
        raise SplitError("group_size and n_folds must be >= 1")
    if len(subjects) % group_size != 0:
        raise SplitError(f"{len(subjects)} subjects not divisible into groups of {group_size}")
    groups = [subjects[i:i + group_size] for i in range(0, len(subjects), group_size)]
    if len(groups) % n_folds != 0:
        raise SplitError(f"{len(groups)} groups not divisible across {n_folds} folds")
    folds = []
    for k in range(n_folds):
        test_groups = groups[k::n_folds]
        test = [s for g in test_groups for s in g]
        test_set = set(test)
        train = [s for s in subjects if s not in test_set]
        folds.append((train, test))
    return folds
