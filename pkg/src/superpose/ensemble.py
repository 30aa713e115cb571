"""Cross-population fusion of top individuals into one ensemble model."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import exprtree as et
from .errors import InputError
from .evolution import Individual, Population, predict_individual, ranked
from .linfit import DEFAULT_LAMBDA1, DEFAULT_LAMBDA2, LinearFit, fit_elastic_net, predict, rmse


@dataclass(frozen=True, eq=False)
class Member:
    population: str
    individual: Individual


@dataclass(frozen=True, eq=False)
class EnsembleModel:
    members: tuple
    fusion: LinearFit
    train_rmse: float
    val_rmse: float
    registry: et.AbstractionRegistry
    n_features: int

    def member_predictions(self, view: et.DataView) -> np.ndarray:
        return np.column_stack([predict_individual(m.individual, view) for m in self.members])

    def predict_view(self, view: et.DataView) -> np.ndarray:
        return predict(self.fusion, self.member_predictions(view))


def select_members(pops, top_m: int = 1) -> list:
    members = []
    for pop in pops:
        for ind in ranked(pop.individuals)[:top_m]:
            members.append(Member(pop.id, ind))
    return members


def fuse(members, train_view, y_train, val_view=None, y_val=None,
         lambda1: float = DEFAULT_LAMBDA1, lambda2: float = DEFAULT_LAMBDA2) -> EnsembleModel:
    """Fit the fusion layer over the given members' training predictions."""
    registry = train_view.registry.snapshot()
    P = np.column_stack([predict_individual(m.individual, train_view) for m in members])
    fusion = fit_elastic_net(P, y_train, lambda1, lambda2)
    val = float("nan")
    if val_view is not None:
        Pv = np.column_stack([predict_individual(m.individual, val_view) for m in members])
        val = rmse(predict(fusion, Pv), y_val)
    return EnsembleModel(tuple(members), fusion, fusion.train_rmse, val, registry,
                         train_view.n_raw)


def build_ensemble(pops: list[Population], top_m: int, train_view, y_train, val_view, y_val,
                   lambda1: float = DEFAULT_LAMBDA1, lambda2: float = DEFAULT_LAMBDA2) -> EnsembleModel:
    """Fuse the ``top_m`` best individuals of every population.

    Populations with fewer than ``top_m`` individuals contribute all of them.
    """
    if top_m < 1:
        raise InputError("top_m must be >= 1")
    members = select_members(pops, top_m)
    return fuse(members, train_view, y_train, val_view, y_val, lambda1, lambda2)


def ensemble_fitness(model: EnsembleModel) -> float:
    return model.val_rmse


def predict_full(model: EnsembleModel, rows) -> np.ndarray:
    """Predict raw dataset rows (each row carries every feature column)."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim == 1:
        rows = rows[None, :]
    if rows.ndim != 2 or rows.shape[1] != model.n_features:
        raise InputError(f"rows must have {model.n_features} feature columns, got shape {rows.shape}")
    if not np.all(np.isfinite(rows)):
        raise InputError("rows contain non-finite values")
    return model.predict_view(et.DataView(rows, model.registry))


def closed_form_terms(model: EnsembleModel):
    """Top-level additive terms of the expanded model.

    Returns ``(terms, intercept)`` where ``terms`` is a list of
    ``(population, coefficient, expanded_gene)`` for every gene with a
    non-zero overall coefficient.
    """
    w = model.fusion.beta
    intercept = model.fusion.intercept
    terms = []
    for wm, m in zip(w, model.members):
        fit = m.individual.fit
        intercept += wm * fit.intercept
        for bj, gene in zip(fit.beta, m.individual.genes):
            coef = wm * bj
            if coef != 0.0:
                terms.append((m.population, float(coef), et.expand(gene, model.registry)))
    return terms, float(intercept)


def closed_form(model: EnsembleModel) -> et.ExprTree:
    """The whole model as a single expanded expression tree."""
    terms, intercept = closed_form_terms(model)
    tree = None
    for _, coef, gene in terms:
        t = et.mul(et.const(coef), gene)
        tree = t if tree is None else et.add(tree, t)
    c = et.const(intercept)
    if tree is None:
        return c
    return et.add(tree, c) if intercept != 0.0 else tree
