"""
Ensemble voting over policy proposals.

``cast_votes`` asks k voters the same question and keeps the proposals that
parse to a valid action. ``select_mode`` is pure: the most frequent
proposal wins, ties go to the lexicographically smallest encoding.
"""
import logging
from collections import Counter
from dataclasses import dataclass

from django.conf import settings

from .environment import enumerate_actions
from .exceptions import AllProposalsInvalid, InvalidAction, ParseFailure
from .prompts import build_policy_prompt, parse_action

logger = logging.getLogger(__name__)

VOTING_ROUNDS = 2


@dataclass(frozen=True)
class Ballot:
    proposals: tuple
    rounds: int
    discarded: int


def select_mode(proposals):
    if not proposals:
        raise ValueError("select_mode needs at least one proposal")
    by_code = {proposal.encode(): proposal for proposal in proposals}
    counts = Counter(proposal.encode() for proposal in proposals)
    top = max(counts.values())
    return by_code[min(code for code, count in counts.items() if count == top)]


def cast_votes(state, k, generator, cot_enabled=True, reference=None, actions=None):
    """Valid proposals from k voters, with one full retry when none is valid."""
    if k < 1:
        raise ValueError("The ensemble needs at least one voter")
    actions = enumerate_actions(state) if actions is None else actions
    query = build_policy_prompt(state, actions, cot_enabled, reference)
    discarded = 0
    for round_number in range(1, VOTING_ROUNDS + 1):
        proposals = []
        for reply in generator.complete_many([query] * k):
            try:
                proposals.append(parse_action(reply, state, actions))
            except (ParseFailure, InvalidAction) as exc:
                discarded += 1
                logger.warning("Discarding proposal at step %d: %s", state.steps_taken, exc)
        if proposals:
            return Ballot(tuple(proposals), round_number, discarded)
    raise AllProposalsInvalid(k, VOTING_ROUNDS)


def ensemble_vote(state, k=None, generator=None, cot_enabled=True, reference=None):
    k = k or settings.THOUGHTGRAPH['ENSEMBLE_SIZE']
    ballot = cast_votes(state, k, generator, cot_enabled, reference)
    winner = select_mode(ballot.proposals)
    logger.debug("Vote at step %d: %s from %s", state.steps_taken, winner,
                 [str(p) for p in ballot.proposals])
    return winner
