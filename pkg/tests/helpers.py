"""Shared fixtures and small oracles used across the test suite."""

from __future__ import annotations

import math
from collections import Counter

import numpy as np

# 12 rows: 5 questions (3 android, 2 not), 6 answers (4 attach to kept
# questions, 1 orphaned by its dropped parent, 1 malformed), 1 tag wiki.
GOLDEN_DUMP = """<?xml version="1.0" encoding="utf-8"?>
<posts>
  <row Id="1" PostTypeId="1" AcceptedAnswerId="101" CreationDate="2015-06-01T10:00:00.000" Score="3" Title="Gradle sync fails" Body="&lt;p&gt;Caf&#233; build &amp; run fails.&lt;/p&gt;" Tags="&lt;android&gt;&lt;java&gt;" />
  <row Id="2" PostTypeId="1" CreationDate="2012-03-04T08:30:00.000" Score="7" Title="Fragment crash" Body="&lt;p&gt;It crashes on rotate.&lt;/p&gt;" Tags="&lt;android&gt;" />
  <row Id="3" PostTypeId="1" CreationDate="2019-11-20T23:59:59.000" Score="0" Title="Push not delivered" Body="&lt;p&gt;No push arrives.&lt;/p&gt;" Tags="&lt;Android&gt;&lt;push&gt;" />
  <row Id="4" PostTypeId="1" CreationDate="2016-01-01T00:00:00.000" Score="2" Title="Swift optional" Body="&lt;p&gt;iOS question.&lt;/p&gt;" Tags="&lt;ios&gt;" />
  <row Id="5" PostTypeId="1" CreationDate="2017-05-05T05:05:05.000" Score="1" Title="Stream API" Body="&lt;p&gt;Java question.&lt;/p&gt;" Tags="&lt;java&gt;" />
  <row Id="101" PostTypeId="2" ParentId="1" CreationDate="2015-06-02T10:00:00.000" Score="0" Body="&lt;p&gt;Clean and rebuild the project.&lt;/p&gt;" />
  <row Id="102" PostTypeId="2" ParentId="1" CreationDate="2015-06-03T10:00:00.000" Score="5" Body="&lt;p&gt;Update the plugin version.&lt;/p&gt;" />
  <row Id="103" PostTypeId="2" ParentId="2" CreationDate="2012-03-05T08:30:00.000" Score="2" Body="&lt;p&gt;Retain the instance state.&lt;/p&gt;" />
  <row Id="104" PostTypeId="2" ParentId="3" CreationDate="2019-11-21T00:00:00.000" Score="-1" Body="&lt;p&gt;Check the token registration.&lt;/p&gt;" />
  <row Id="105" PostTypeId="2" ParentId="4" CreationDate="2016-01-02T00:00:00.000" Score="9" Body="&lt;p&gt;Use guard let.&lt;/p&gt;" />
  <row Id="106" PostTypeId="2" CreationDate="2017-05-06T05:05:05.000" Score="4" Body="&lt;p&gt;Orphan by omission.&lt;/p&gt;" />
  <row Id="200" PostTypeId="4" CreationDate="2010-01-01T00:00:00.000" Body="tag wiki" />
</posts>
"""

GOLDEN_Q1_BODY = "<p>Café build & run fails.</p>"


def ctfidf_oracle(docs_tokens, labels, min_df=2):
    """Direct-formula class TF-IDF, written independently of the package.

    Plain loops and math.log; returns {class: {term: weight}}.
    """
    class_tokens = {}
    doc_freq = {}
    for tokens, label in zip(docs_tokens, labels):
        if label == -1:
            continue
        class_tokens.setdefault(label, []).extend(tokens)
        for term in set(tokens):
            doc_freq[term] = doc_freq.get(term, 0) + 1
    if not class_tokens:
        raise ValueError("all noise")
    n_classes = len(class_tokens)
    total_tokens = sum(len(v) for v in class_tokens.values())
    avg = total_tokens / n_classes
    freq = {}
    for tokens in class_tokens.values():
        for t in tokens:
            freq[t] = freq.get(t, 0) + 1
    out = {}
    for c, tokens in class_tokens.items():
        tf = Counter(tokens)
        out[c] = {
            t: count * math.log(1.0 + avg / freq[t])
            for t, count in tf.items()
            if doc_freq[t] >= min_df
        }
    return out


def dbscan_oracle(points, eps, min_pts):
    """Quadratic union-find density clustering oracle.

    Core points: >= min_pts neighbors within eps (self included); core
    points within eps union into clusters; a border point adopts its
    lowest-index core neighbor's cluster; the rest are noise (-1).
    """
    n = len(points)
    def dist(i, j):
        return math.dist(points[i], points[j])

    neighbors = [[j for j in range(n) if dist(i, j) <= eps] for i in range(n)]
    core = [len(neighbors[i]) >= min_pts for i in range(n)]
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i, j):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)

    for i in range(n):
        if not core[i]:
            continue
        for j in neighbors[i]:
            if core[j]:
                union(i, j)
    labels = [-1] * n
    for i in range(n):
        if core[i]:
            labels[i] = find(i)
    for i in range(n):
        if core[i]:
            continue
        core_nbs = [j for j in neighbors[i] if core[j]]
        if core_nbs:
            labels[i] = find(min(core_nbs))
    return labels


def canonical_labels(labels):
    """Relabel clusters by first appearance so label schemes compare."""
    mapping = {}
    out = []
    for l in labels:
        if l == -1:
            out.append(-1)
            continue
        if l not in mapping:
            mapping[l] = len(mapping)
        out.append(mapping[l])
    return out


def cluster_purity(labels, truth):
    """Fraction of points whose cluster's majority truth class matches."""
    contingency = {}
    for label, t in zip(labels, truth):
        contingency.setdefault(label, Counter())[t] += 1
    return sum(max(c.values()) for c in contingency.values()) / len(labels)


def make_blobs(rng, centers, n_per, sigma):
    """Gaussian blobs with ground-truth labels."""
    points = []
    truth = []
    for label, center in enumerate(centers):
        pts = rng.normal(loc=center, scale=sigma, size=(n_per, len(center)))
        points.append(pts)
        truth.extend([label] * n_per)
    return np.vstack(points), truth
