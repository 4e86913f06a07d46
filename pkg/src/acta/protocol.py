"""Session protocol: vanishing-cue nudge schedule and the closed-loop
feedback decision.

One EncounterState instance owns a session's mutable state; position events
must arrive in timestamp order from a single caller. Emitted FeedbackEvents
are immutable.
"""

from dataclasses import dataclass, field, replace
from enum import Enum

from .errors import PlanAlreadyActive, SessionNotActive, TooFewSessions, UnknownPlace
from .geo import PlaceKind, is_within


class Phase(Enum):
    OPEN_LOOP_NUDGES = "phase1"
    CLOSED_LOOP_NFB = "phase2"


class FeedbackKind(Enum):
    NUDGE = "nudge"
    NFB_ENCOURAGE = "nfb_encourage"
    NFB_REINFORCE = "nfb_reinforce"
    REWARD = "reward"
    NOOP = "noop"


class Rationale(Enum):
    SCHEDULED = "scheduled"
    CASE_A = "case_a"
    CASE_B = "case_b"
    CASE_C_NO_INTERVENTION = "case_c_no_intervention"
    CASE_C_NUDGE = "case_c_nudge"
    DESTINATION_REACHED = "destination_reached"


class CaseCPolicy(Enum):
    NOOP = "noop"
    DELIVER_NUDGE = "nudge"


class LocationClass(Enum):
    LANDMARK = "landmark"
    NON_RELEVANT = "non_relevant"
    NEITHER = "neither"


class AttentionLabel(Enum):
    ATTENTION = "attention"
    NON_ATTENTION = "non_attention"


class PlaceStatus(Enum):
    UNVISITED = "unvisited"
    APPROACHING = "approaching"  # inside the radius, encounter active
    RESOLVED = "resolved"


@dataclass(frozen=True)
class DisturbanceSpec:
    trigger_ts_offset_s: float
    payload: str
    response_deadline_s: float = 10.0
    kind: str = "auditory_question"


@dataclass(frozen=True)
class FeedbackEvent:
    ts: float
    kind: FeedbackKind
    place_id: str | None = None
    rationale: Rationale | None = None


@dataclass
class SessionPlan:
    session_index: int  # 1-based
    n_sessions: int
    nudge_probability: list
    path_id: str
    phase: Phase = Phase.OPEN_LOOP_NUDGES
    disturbances: list = field(default_factory=list)
    prev_probability: list | None = None
    pure_nfb: bool = False
    case_c_policy: CaseCPolicy = CaseCPolicy.NOOP
    decision_delay_s: float = 0.0
    started: bool = False
    _consumed: set = field(default_factory=set)

    def __post_init__(self):
        if not 1 <= self.session_index <= self.n_sessions:
            raise ValueError("session_index out of range")
        if any(not 0.0 <= p <= 1.0 for p in self.nudge_probability):
            raise ValueError("nudge probabilities must be in [0, 1]")


def plan_sessions(path, n_sessions, phase, disturbances=(), case_c_policy=CaseCPolicy.NOOP,
                  decision_delay_s=0.0):
    """Vanishing-cue schedule: per-landmark nudge probability 1.0 on the first
    session, 0.0 on the last, linear in between."""
    if n_sessions < 2:
        raise TooFewSessions("need at least 2 sessions (full cues, then vanished ones)")
    k = len(path.landmarks)
    plans = []
    prev = None
    for s in range(1, n_sessions + 1):
        p = 1.0 - (s - 1) / (n_sessions - 1)
        probs = [p] * k
        plans.append(
            SessionPlan(
                session_index=s,
                n_sessions=n_sessions,
                nudge_probability=probs,
                path_id=path.id,
                phase=phase,
                disturbances=[replace(d) for d in disturbances],
                prev_probability=list(prev) if prev is not None else None,
                pure_nfb=(phase is Phase.CLOSED_LOOP_NFB and s == n_sessions),
                case_c_policy=case_c_policy,
                decision_delay_s=decision_delay_s,
            )
        )
        prev = probs
    return plans


def adjust_plan(plan, performance):
    """Tune a not-yet-started plan from the previous session's outcome.

    Completion >= 0.9 halves the remaining probabilities; < 0.5 restores them
    toward the previous session's values; the dead-band in between leaves the
    plan untouched.
    """
    if plan.started:
        raise PlanAlreadyActive(f"session {plan.session_index} already started")
    rate = performance.completion_rate
    if rate >= 0.9:
        new = [p * 0.5 for p in plan.nudge_probability]
    elif rate < 0.5:
        if plan.prev_probability is None:
            new = [min(1.0, p) for p in plan.nudge_probability]
        else:
            new = [
                min(1.0, max(p, q)) for p, q in zip(plan.nudge_probability, plan.prev_probability)
            ]
    else:
        return plan
    return replace(plan, nudge_probability=new, _consumed=set(plan._consumed))


@dataclass
class EncounterState:
    """Per-session place latches; each place resolves at most once."""

    path: object
    status: dict = field(default_factory=dict)
    transitions: dict = field(default_factory=dict)  # place_id -> [(ts, status)]
    pending: list = field(default_factory=list)  # deferred phase-2 decisions
    session_done: bool = False
    active: bool = True

    def __post_init__(self):
        for place in self.path.places():
            self.status[place.id] = PlaceStatus.UNVISITED
            self.transitions[place.id] = []

    def encounter_active(self):
        return any(s is PlaceStatus.APPROACHING for s in self.status.values())

    def _set(self, place_id, ts, status):
        self.status[place_id] = status
        self.transitions[place_id].append((ts, status))


def decide_feedback(location_class, classifier_label, nudge_fired, policy=CaseCPolicy.NOOP):
    """Closed-loop decision for one encounter; total over the 3x2x2 grid.

    Returns (FeedbackKind, Rationale | None). A fired nudge suppresses any
    neurofeedback for the same encounter.
    """
    if nudge_fired:
        return FeedbackKind.NOOP, Rationale.SCHEDULED
    if location_class is LocationClass.NEITHER:
        return FeedbackKind.NOOP, None
    if location_class is LocationClass.LANDMARK and classifier_label is AttentionLabel.ATTENTION:
        return FeedbackKind.NFB_ENCOURAGE, Rationale.CASE_A
    if (
        location_class is LocationClass.NON_RELEVANT
        and classifier_label is AttentionLabel.NON_ATTENTION
    ):
        return FeedbackKind.NFB_REINFORCE, Rationale.CASE_B
    # classifier output mismatches the location
    if policy is CaseCPolicy.DELIVER_NUDGE:
        return FeedbackKind.NUDGE, Rationale.CASE_C_NUDGE
    return FeedbackKind.NOOP, Rationale.CASE_C_NO_INTERVENTION


def _resolve_encounter(state, place, ts, plan, classifier_label, rng):
    """Feedback for a first entry into `place`; phase 2 may defer it."""
    events = []
    if place.kind is PlaceKind.DESTINATION:
        events.append(
            FeedbackEvent(ts, FeedbackKind.REWARD, place.id, Rationale.DESTINATION_REACHED)
        )
        state.session_done = True
        return events

    nudge_fired = False
    if place.kind is PlaceKind.LANDMARK:
        prob = plan.nudge_probability[place.index - 1]
        if prob >= 1.0:
            nudge_fired = True
        elif prob <= 0.0:
            nudge_fired = False
        else:
            nudge_fired = rng is not None and rng.random() < prob
        if nudge_fired:
            events.append(FeedbackEvent(ts, FeedbackKind.NUDGE, place.id, Rationale.SCHEDULED))

    if plan.phase is Phase.OPEN_LOOP_NUDGES:
        if not nudge_fired:
            events.append(FeedbackEvent(ts, FeedbackKind.NOOP, place.id, None))
        return events

    # phase 2: neurofeedback decision, possibly deferred so the EEG window
    # covers in-radius activity
    if nudge_fired:
        return events
    location = (
        LocationClass.LANDMARK
        if place.kind is PlaceKind.LANDMARK
        else LocationClass.NON_RELEVANT
    )
    if plan.decision_delay_s <= 0.0:
        kind, rationale = decide_feedback(location, classifier_label, False, plan.case_c_policy)
        events.append(FeedbackEvent(ts, kind, place.id, rationale))
    else:
        state.pending.append((ts + plan.decision_delay_s, place.id, location))
    return events


def on_position(state, pos, ts, plan, path, classifier_label=None, rng=None):
    """Advance the session state machine with one GPS fix.

    Emits feedback events for first entries into place radii (later entries
    are latched out) and resolves any deferred phase-2 decisions that have
    come due, using the caller-supplied current classifier label.
    """
    if not state.active or state.session_done:
        raise SessionNotActive("session is not accepting position events")
    if plan.path_id != path.id:
        raise UnknownPlace(f"plan targets path {plan.path_id}, got {path.id}")
    if plan.phase is Phase.CLOSED_LOOP_NFB and plan.decision_delay_s <= 0.0 and classifier_label is None:
        raise ValueError("phase 2 requires a classifier label")
    plan.started = True
    events = []

    # deferred phase-2 decisions that have come due
    still_pending = []
    for due_ts, place_id, location in state.pending:
        if due_ts <= ts:
            if classifier_label is None:
                # no complete window yet; try again on the next fix
                still_pending.append((due_ts, place_id, location))
                continue
            kind, rationale = decide_feedback(
                location, classifier_label, False, plan.case_c_policy
            )
            events.append(FeedbackEvent(due_ts, kind, place_id, rationale))
        else:
            still_pending.append((due_ts, place_id, location))
    state.pending = still_pending

    for place in path.places():
        if place.kind is PlaceKind.START:
            continue
        inside = is_within(pos, place)
        status = state.status[place.id]
        if inside and status is PlaceStatus.UNVISITED:
            state._set(place.id, ts, PlaceStatus.APPROACHING)
            events.extend(_resolve_encounter(state, place, ts, plan, classifier_label, rng))
        elif not inside and status is PlaceStatus.APPROACHING:
            state._set(place.id, ts, PlaceStatus.RESOLVED)
    return events


def inject_disturbances(plan, now):
    """Disturbances whose offset has elapsed and were not yet delivered."""
    due = []
    for i, d in enumerate(plan.disturbances):
        if i in plan._consumed:
            continue
        if d.trigger_ts_offset_s <= now:
            plan._consumed.add(i)
            due.append(d)
    return due
