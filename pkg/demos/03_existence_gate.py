# %% [markdown]
# # Existence gate
#
# Judges vote on whether the referred object appears at all. Under the
# unanimous policy an expression is skipped only when two or more judges all
# say `absent`. A judge that fails counts as `present`, so outages never
# erase a real target.

# %%
import itertools

from rvos_harness import ReferringExpression, VideoSequence, decide, verify
from rvos_harness.gate import MockJudge

for votes in itertools.product(["present", "absent", "error"], repeat=2):
    print(votes, "->", decide(list(votes)).value)

# %% [markdown]
# The same votes under the other policies, and with errors counted as absent.

# %%
votes = ["absent", "absent", "error"]
for policy in ("unanimous", "majority", "single"):
    print(policy, decide(votes, policy).value, decide(votes, policy, fail_open=False).value)

# %% [markdown]
# `verify` fans the request out to every judge at once and enforces a deadline.

# %%
video = VideoSequence.blank("v0", 12)
expr = ReferringExpression("v0/0", "v0", "the red kite")
judges = [
    MockJudge("fast", {"v0/0": "absent"}),
    MockJudge("slow", {"v0/0": {"verdict": "absent", "latency_ms": 500}}),
]
decision = verify(video, expr, judges, timeout_ms=100)
for v in decision.verdicts:
    print(v.judge_id, v.outcome.value, v.raw_response)
print("outcome:", decision.outcome.value)
