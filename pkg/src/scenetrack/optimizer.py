"""Arrangement search: greedy construction plus simulated annealing.

The state tracks covered voxels with integer counters so add/remove/move
updates are exact and reversible; term sums are recomputed from cached
per-placement values at every evaluation, keeping the search honest at
desk-scale arrangement sizes instead of maintaining drifting running sums.

Moves: add an unplaced object at one of its proposed poses, remove a placed
object, move a placed object to another proposed pose, or swap the poses of
two placed objects of the same semantic class. Swapped-in poses are rescored
through a caller-provided callback since a pose proposed for one object says
nothing about how well another object fits there; without a callback the
swap move is simply never applicable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, TextIO

import numpy as np

from .model import Arrangement, PosedObject
from .objective import (ObjectiveContext, ObjectiveValue, combine_terms,
                        objective)
from .pose import GroundPose
from .proposal import ScoredPose

PoseSets = dict[int, list[ScoredPose]]
Rescore = Callable[[int, GroundPose], float]


@dataclass(frozen=True)
class AnnealConfig:
    iterations: int = 25000
    restart_prob: float = 0.005
    t_start: float = 0.05
    t_end: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.iterations <= 0:
            raise ValueError("iterations must be positive")
        if not 0.0 <= self.restart_prob < 1.0:
            raise ValueError("restart_prob must be in [0, 1)")


class SearchState:
    """Mutable arrangement under search, with exact incremental coverage."""

    def __init__(self, ctx: ObjectiveContext, pose_sets: PoseSets) -> None:
        self.ctx = ctx
        self.pose_sets = {uid: list(poses) for uid, poses in pose_sets.items()}
        self.uids = sorted(self.pose_sets)
        self.placed: dict[int, PosedObject] = {}
        self._counts = np.zeros(ctx.grid.n_occupied, dtype=np.int32)
        self._covered = 0
        self._scores: dict[tuple, float] = {}

    def add(self, placement: PosedObject) -> None:
        assert placement.uid not in self.placed
        cells = self.ctx.cells(placement)
        self._covered += int((self._counts[cells] == 0).sum())
        self._counts[cells] += 1
        self.placed[placement.uid] = placement

    def remove(self, uid: int) -> PosedObject:
        placement = self.placed.pop(uid)
        cells = self.ctx.cells(placement)
        self._counts[cells] -= 1
        self._covered -= int((self._counts[cells] == 0).sum())
        return placement

    def placements(self) -> list[PosedObject]:
        return [self.placed[uid] for uid in sorted(self.placed)]

    def value(self) -> ObjectiveValue:
        """Objective from the counters and the context caches."""
        placements = self.placements()
        if placements:
            coverage = (self._covered / self.ctx.grid.n_occupied
                        if self.ctx.grid.n_occupied else 0.0)
            geometry = float(np.mean([p.score for p in placements]))
            hysteresis = float(np.mean([self.ctx.hysteresis(p)
                                        for p in placements]))
        else:
            coverage = geometry = hysteresis = 0.0
        worst = 0.0
        for i in range(len(placements)):
            for j in range(i + 1, len(placements)):
                worst = max(worst, self.ctx.pair_penalty(placements[i],
                                                         placements[j]))
        intersection = 1.0 - worst
        return ObjectiveValue(
            total=combine_terms(self.ctx.weights, coverage, geometry,
                                intersection, hysteresis),
            coverage=coverage, geometry=geometry,
            intersection=intersection, hysteresis=hysteresis)

    def verify(self, tol: float = 1e-9) -> None:
        """Assert the incremental state matches a from-scratch evaluation."""
        fresh = self.ctx.evaluate(self.placements())
        if abs(fresh.total - self.value().total) > tol:
            raise AssertionError("cached objective drifted from recomputation")

    def restore(self, placements: dict[int, PosedObject]) -> None:
        self.placed = {}
        self._counts[:] = 0
        self._covered = 0
        for uid in sorted(placements):
            self.add(placements[uid])

    def rescored(self, uid: int, pose: GroundPose,
                 rescore: Rescore) -> PosedObject:
        key = (uid, pose.tx, pose.ty, pose.tz, pose.yaw)
        score = self._scores.get(key)
        if score is None:
            score = rescore(uid, pose)
            self._scores[key] = score
        return PosedObject(uid=uid, pose=pose, score=score)


def greedy_init(ctx: ObjectiveContext, pose_sets: PoseSets) -> SearchState:
    """Repeatedly add the single best-gain placement until no gain remains."""
    state = SearchState(ctx, pose_sets)
    current = state.value().total
    while True:
        best_gain = 0.0
        best_placement = None
        for uid in state.uids:
            if uid in state.placed:
                continue
            for candidate in state.pose_sets[uid]:
                placement = PosedObject(uid=uid, pose=candidate.pose,
                                        score=candidate.score)
                state.add(placement)
                gain = state.value().total - current
                state.remove(uid)
                if gain > best_gain:
                    best_gain = gain
                    best_placement = placement
        if best_placement is None:
            return state
        state.add(best_placement)
        current += best_gain


def _applicable_moves(state: SearchState, rescore: Rescore | None,
                      ) -> tuple[list[str], list[tuple[int, int]]]:
    placed = sorted(state.placed)
    addable = [uid for uid in state.uids
               if uid not in state.placed and state.pose_sets[uid]]
    moves = []
    if addable:
        moves.append("add")
    if placed:
        moves.append("remove")
    movable = [uid for uid in placed if any(
        sp.pose != state.placed[uid].pose for sp in state.pose_sets[uid])]
    if movable:
        moves.append("move")
    pairs: list[tuple[int, int]] = []
    if rescore is not None:
        classes = {uid: state.ctx.model.resolve(uid).semantic_class
                   for uid in placed}
        pairs = [(a, b) for i, a in enumerate(placed)
                 for b in placed[i + 1:] if classes[a] == classes[b]]
        if pairs:
            moves.append("swap")
    return moves, pairs


def anneal(state: SearchState, cfg: AnnealConfig,
           rescore: Rescore | None = None,
           trace: TextIO | None = None) -> SearchState:
    """Metropolis search over add/remove/move/swap; returns best-ever state."""
    rng = np.random.default_rng(cfg.seed)
    current = state.value().total
    best_value = current
    best_placed = dict(state.placed)
    if trace is not None:
        trace.write("iter,temperature,objective,accepted,move\n")

    for it in range(cfg.iterations):
        temperature = cfg.t_start + (cfg.t_end - cfg.t_start) * (it / cfg.iterations)
        if rng.random() < cfg.restart_prob:
            state.restore(best_placed)
            current = best_value

        moves, pairs = _applicable_moves(state, rescore)
        if not moves:
            break
        kind = moves[rng.integers(len(moves))]
        placed = sorted(state.placed)

        # apply the move, remembering how to undo it
        if kind == "add":
            addable = [uid for uid in state.uids
                       if uid not in state.placed and state.pose_sets[uid]]
            uid = addable[rng.integers(len(addable))]
            sp = state.pose_sets[uid][rng.integers(len(state.pose_sets[uid]))]
            state.add(PosedObject(uid=uid, pose=sp.pose, score=sp.score))
            undo = [("remove", uid)]
        elif kind == "remove":
            uid = placed[rng.integers(len(placed))]
            undo = [("add", state.remove(uid))]
        elif kind == "move":
            movable = [uid for uid in placed if any(
                sp.pose != state.placed[uid].pose
                for sp in state.pose_sets[uid])]
            uid = movable[rng.integers(len(movable))]
            options = [sp for sp in state.pose_sets[uid]
                       if sp.pose != state.placed[uid].pose]
            sp = options[rng.integers(len(options))]
            old = state.remove(uid)
            state.add(PosedObject(uid=uid, pose=sp.pose, score=sp.score))
            undo = [("remove", uid), ("add", old)]
        else:
            uid_a, uid_b = pairs[rng.integers(len(pairs))]
            old_a = state.remove(uid_a)
            old_b = state.remove(uid_b)
            state.add(state.rescored(uid_a, old_b.pose, rescore))
            state.add(state.rescored(uid_b, old_a.pose, rescore))
            undo = [("remove", uid_a), ("remove", uid_b),
                    ("add", old_a), ("add", old_b)]

        candidate = state.value().total
        delta = candidate - current
        if delta >= 0.0:
            accepted = True
        elif temperature > 0.0:
            accepted = bool(rng.random() < math.exp(delta / temperature))
        else:
            accepted = False

        if accepted:
            current = candidate
            if current > best_value:
                best_value = current
                best_placed = dict(state.placed)
        else:
            for action, arg in undo:
                state.remove(arg) if action == "remove" else state.add(arg)
        if trace is not None:
            trace.write(f"{it},{temperature:.6f},{current:.9f},"
                        f"{int(accepted)},{kind}\n")

    state.restore(best_placed)
    return state


def optimize_arrangement(pose_sets: PoseSets, ctx: ObjectiveContext,
                         timestep: int, cfg: AnnealConfig | None = None,
                         rescore: Rescore | None = None,
                         trace: TextIO | None = None) -> Arrangement:
    """Greedy initialization followed by annealing; placements sorted by id."""
    if cfg is None:
        cfg = AnnealConfig()
    state = anneal(greedy_init(ctx, pose_sets), cfg, rescore=rescore,
                   trace=trace)
    return Arrangement(timestep=timestep,
                       placements=tuple(state.placements()))


def evaluate_arrangement(ctx: ObjectiveContext,
                         arrangement: Arrangement) -> ObjectiveValue:
    """Fresh, cache-free objective of a finished arrangement."""
    return objective(ctx.grid, arrangement, ctx.model, ctx.weights)
