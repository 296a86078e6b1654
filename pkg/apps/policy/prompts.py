import logging
import re

from django.conf import settings
from django.template.loader import render_to_string

from apps.backends.generators import GeneratorQuery
from apps.graphs.graph import serialize_state
from apps.tasks.tasks import ATOMIC_SIZE

from .environment import Action, enumerate_actions
from .exceptions import InvalidAction, ParseFailure

logger = logging.getLogger(__name__)

POLICY_TAG = 'policy'
FENCED_JSON = re.compile(r'```(?:json)?\s*(\{.*?\})\s*```', re.DOTALL)


def build_policy_prompt(state, actions=None, cot_enabled=True, reference=None):
    """The policy query for ``state``.

    ``reference`` is the scripted divide-and-conquer choice. It never
    reaches the prompt text, only the query context a simulated voter reads.
    """
    actions = enumerate_actions(state) if actions is None else actions
    context = {
        'task': state.task.kind.value,
        'problem': state.graph.root.content,
        'atomic_size': ATOMIC_SIZE,
        'multiplicity': settings.THOUGHTGRAPH['POLICY_MULTIPLICITY'],
        'actions': actions,
        'state_text': serialize_state(state.graph),
        'history': state.history,
        'cot': cot_enabled,
    }
    system = render_to_string('policy/system.txt', context).strip()
    user = render_to_string('policy/user.txt', context).strip()
    logger.debug("Policy prompt at step %d:\n%s", state.steps_taken, user)
    return GeneratorQuery(
        system=system,
        user=user,
        tag=POLICY_TAG,
        temperature=settings.THOUGHTGRAPH['TEMPERATURE'],
        max_tokens=settings.THOUGHTGRAPH['POLICY_MAX_TOKENS'],
        context={
            'actions': [action.encode() for action in actions],
            'reference': reference.encode() if reference else None,
            'cot': cot_enabled,
        },
    )


def parse_action(reply, state, actions=None):
    """The last fenced JSON action in ``reply``, checked against the valid set."""
    blocks = FENCED_JSON.findall(reply or '')
    if not blocks:
        raise ParseFailure("Reply holds no fenced JSON action")
    action = Action.decode(blocks[-1])
    actions = enumerate_actions(state) if actions is None else actions
    if action not in actions:
        raise InvalidAction(f"{action} is not a valid action in this state")
    return action
