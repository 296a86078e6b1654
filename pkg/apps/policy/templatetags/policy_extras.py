from django import template

register = template.Library()


@register.simple_tag
def action_code(action):
    return action.encode()


@register.simple_tag
def history_line(entry, number):
    """One line per applied action: what ran and which nodes came and went."""
    action, trace = entry
    created = ', '.join(f"{node['id']} (value {node['value']:.2f})" for node in trace.created)
    removed = ', '.join(str(node_id) for node_id in trace.removed)
    return (f"{number}. {action.encode()} -> created [{created}], removed [{removed}], "
            f"{trace.queries} queries")
