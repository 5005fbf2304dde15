'''
Linear DC network sensitivities.

* :any:`PtdfMatrix` maps bus injections (MW) to line flows (MW). The injection
  at the reference bus is the implied balancing injection, so its column is
  zero.
* :any:`InjectionMatrix` ``H`` maps a state (angle) perturbation ``c`` to the
  change of bus injection measurements, ``H c`` (MW per rad). An attacker
  adding ``H c`` to the measurements stays invisible to a residual-based bad
  data detector.

Line ``k`` runs from ``from_bus`` to ``to_bus``; positive flow is in that
direction.
'''

import csv
import logging
from pathlib import Path

import attr
import networkx as nx
import numpy as np
import scipy.linalg

from .case_io import network_graph

__all__ = [
    'PtdfMatrix',
    'InjectionMatrix',
    'SingularNetworkError',
    'ImbalanceError',
    'build_matrices',
    'physical_flows',
    'cyber_flows',
    'find_critical_lines',
    'find_marginal_generators',
    'attackable_buses',
    'fit_to_budget',
    'unobservability_audit',
    'export_matrix_csv',
]

L = lambda: logging.getLogger(__name__)

# relative to total load
IMBALANCE_TOL = 1e-6


class SingularNetworkError(ValueError):
    '''Reduced susceptance matrix is singular (island or zero reactance).'''


class ImbalanceError(ValueError):
    '''Dispatch does not match the total load.'''


@attr.s(frozen=True, eq=False)
class PtdfMatrix:
    # n_br x n_b
    entries = attr.ib()
    reference_bus = attr.ib()
    bus_ids = attr.ib(converter=tuple)
    line_labels = attr.ib(converter=tuple)

    def row(self, line):
        return self.entries[line]


@attr.s(frozen=True, eq=False)
class InjectionMatrix:
    # n_b x n_b, MW per rad
    entries = attr.ib()
    bus_ids = attr.ib(converter=tuple)

    def __matmul__(self, c):
        return self.entries @ c


def _line_labels(case):
    return ['%s-%s' % (br.from_bus, br.to_bus) for br in case.branches]


def incidence_matrix(case):
    '''Branch-bus incidence: +1 at the from bus, -1 at the to bus.'''
    A = np.zeros((case.n_branch, case.n_bus))
    index = case.bus_index
    for k, br in enumerate(case.branches):
        A[k, index[br.from_bus]] = 1.0
        A[k, index[br.to_bus]] = -1.0
    return A


def build_matrices(case, reference_bus=None):
    '''Compute ``(PtdfMatrix, InjectionMatrix)`` for ``case``.

    ``reference_bus`` overrides the case's declared reference.

    Raises :any:`SingularNetworkError` if the network is disconnected or a
    reactance is not positive.
    '''
    if reference_bus is None:
        reference_bus = case.reference_bus
    index = case.bus_index
    if reference_bus not in index:
        raise SingularNetworkError('Reference bus %r does not exist' % (reference_bus,))
    for k, br in enumerate(case.branches):
        if not br.reactance > 0:
            raise SingularNetworkError(
                'Branch %d (%s-%s) has reactance %r; susceptance matrix is singular'
                % (k, br.from_bus, br.to_bus, br.reactance)
            )
    graph = network_graph(case)
    if case.n_bus > 1 and not nx.is_connected(graph):
        n_islands = nx.number_connected_components(graph)
        raise SingularNetworkError(
            'Network is disconnected into %d islands; susceptance matrix is singular' % n_islands
        )

    A = incidence_matrix(case)
    b = 1.0 / np.array([br.reactance for br in case.branches])
    Bbus = A.T @ (b[:, None] * A)
    ref = index[reference_bus]
    keep = np.array([i for i in range(case.n_bus) if i != ref], dtype=int)
    X = np.zeros((case.n_bus, case.n_bus))
    if keep.size:
        Bred = Bbus[np.ix_(keep, keep)]
        lu = scipy.linalg.lu_factor(Bred, check_finite=True)
        if np.any(np.abs(np.diag(lu[0])) < 1e-12 * max(1.0, np.abs(Bred).max())):
            raise SingularNetworkError('Reduced susceptance matrix is numerically singular')
        X[np.ix_(keep, keep)] = scipy.linalg.lu_solve(lu, np.eye(keep.size))
    ptdf = b[:, None] * (A @ X)
    ptdf[:, ref] = 0.0
    H = case.base_mva * Bbus
    L().debug('Built %dx%d PTDF, reference bus %s', ptdf.shape[0], ptdf.shape[1], reference_bus)
    return (
        PtdfMatrix(entries=ptdf, reference_bus=reference_bus,
                   bus_ids=[bus.id for bus in case.buses], line_labels=_line_labels(case)),
        InjectionMatrix(entries=H, bus_ids=[bus.id for bus in case.buses]),
    )


def _net_injection(case, dispatch):
    dispatch = np.asarray(dispatch, dtype=float)
    if dispatch.shape != (case.n_gen,):
        raise ValueError('Dispatch has shape %s, expected (%d,)' % (dispatch.shape, case.n_gen))
    loads = case.loads
    total = loads.sum()
    mismatch = dispatch.sum() - total
    if abs(mismatch) > IMBALANCE_TOL * max(1.0, abs(total)):
        raise ImbalanceError(
            'Generation %.9g MW does not match load %.9g MW' % (dispatch.sum(), total)
        )
    return case.gen_bus_matrix @ dispatch - loads


def physical_flows(ptdf, case, dispatch):
    '''``PTDF (G_B dispatch - P_D)``: the flows that actually occur.'''
    return ptdf.entries @ _net_injection(case, dispatch)


def cyber_flows(ptdf, case, dispatch, c, H=None):
    '''``PTDF (G_B dispatch - P_D + H c)``: the flows the operator believes in.

    ``H`` defaults to the injection matrix of ``case``.
    '''
    c = np.asarray(c, dtype=float)
    if c.shape != (case.n_bus,):
        raise ValueError('Attack vector has shape %s, expected (%d,)' % (c.shape, case.n_bus))
    if H is None:
        _, H = build_matrices(case, ptdf.reference_bus)
    return ptdf.entries @ (_net_injection(case, dispatch) + H.entries @ c)


def find_critical_lines(flows, case, threshold=0.9):
    '''Rated lines with ``|flow| >= threshold * rating`` (boundary inclusive).'''
    if not 0 < threshold <= 1:
        raise ValueError('Threshold must be in (0, 1], got %r' % threshold)
    flows = np.asarray(flows, dtype=float)
    ratings = case.ratings
    return {
        k for k in case.rated_lines
        if abs(flows[k]) >= threshold * ratings[k] * (1 - 1e-12)
    }


def find_marginal_generators(dispatch, case, tol=1e-4):
    '''Generators strictly inside both limits by more than ``tol`` MW.'''
    dispatch = np.asarray(dispatch, dtype=float)
    pmin, pmax = case.pmin, case.pmax
    return {
        g for g in range(case.n_gen)
        if pmin[g] + tol < dispatch[g] < pmax[g] - tol
    }


def attackable_buses(case):
    '''Indices of buses where the attack vector may be nonzero.

    These are the load buses without the reference bus: the l1 budget only
    counts load buses, and an angle shift at the reference is meaningless.
    '''
    ref = case.reference_index
    return [i for i in case.load_buses if i != ref]


def fit_to_budget(c, N1):
    '''Scale ``c`` down so that ``sum |c| <= N1`` holds exactly.

    Solver output can overshoot the budget by the feasibility tolerance.
    Scaling keeps every load-shift bound and ``sum(H c) = 0``.
    '''
    c = np.asarray(c, dtype=float)
    l1 = float(np.abs(c).sum())
    if l1 > N1:
        c = c * (N1 / l1) if N1 > 0 else np.zeros_like(c)
    return c


def unobservability_audit(H, case, c, L_S, N1, *, l1_tol=1e-8, shift_tol=1e-6):
    '''Check an attack vector against the stealth constraints.

    Returns a list of violation messages (empty if ``c`` passes):

    * ``sum(H c) = 0`` within ``1e-6 * total load``,
    * ``|(H c)_i| <= L_S * P_Di + shift_tol`` per bus,
    * ``sum over load buses |c_i| <= N1 + l1_tol``,
    * ``c_i = 0`` off the attackable buses.
    '''
    c = np.asarray(c, dtype=float)
    problems = []
    if c.shape != (case.n_bus,):
        return ['attack vector has shape %s, expected (%d,)' % (c.shape, case.n_bus)]
    Hc = H.entries @ c
    loads = case.loads
    total = max(1.0, float(np.abs(loads).sum()))
    if abs(Hc.sum()) > 1e-6 * total:
        problems.append('injection changes do not cancel: sum(Hc) = %.3g' % Hc.sum())
    limit = L_S * np.abs(loads) + shift_tol
    for i in np.flatnonzero(np.abs(Hc) > limit):
        problems.append(
            'bus %s: load shift %.6g MW exceeds %.6g MW'
            % (case.buses[i].id, Hc[i], L_S * abs(loads[i]))
        )
    l1 = float(np.abs(c[case.load_buses]).sum()) if case.load_buses else 0.0
    if l1 > N1 + l1_tol:
        problems.append('l1 norm %.9g exceeds budget %.9g' % (l1, N1))
    allowed = np.zeros(case.n_bus, dtype=bool)
    allowed[attackable_buses(case)] = True
    for i in np.flatnonzero(~allowed & (np.abs(c) > 1e-9)):
        problems.append('bus %s is not attackable but c = %.3g' % (case.buses[i].id, c[i]))
    return problems


def export_matrix_csv(matrix, path):
    '''Write a :any:`PtdfMatrix` or :any:`InjectionMatrix` as CSV.

    The header row holds the bus ids; each data row starts with the line
    label (``from-to``) or bus id.
    '''
    if isinstance(matrix, PtdfMatrix):
        labels = matrix.line_labels
    else:
        labels = matrix.bus_ids
    path = Path(path)
    with path.open('w', newline='') as fp:
        writer = csv.writer(fp)
        writer.writerow([''] + [str(bus_id) for bus_id in matrix.bus_ids])
        for label, row in zip(labels, matrix.entries):
            writer.writerow([str(label)] + [repr(float(v)) for v in row])
    L().info('Exported %s to %s', type(matrix).__name__, path)
    return path
