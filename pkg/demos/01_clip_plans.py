# %% [markdown]
# # Clip plans
#
# A plan cuts a video into `N` clips of `c = g*g + 1` slots and hands each
# clip one [SEG] token. Long videos are subsampled to `T` frames first, short
# ones are split into overlapping spans.

# %%
from rvos_harness import SchedulerConfig, governing_tokens, plan

cfg = SchedulerConfig(t_target=100, n_clips=10)
print("slots per clip:", cfg.clip_len, " mosaic grid:", cfg.grid)

# %% [markdown]
# A 240-frame video: every clip holds ten distinct sampled frames, and each
# unsampled frame borrows the token of its nearest sampled neighbour.

# %%
long_plan = plan(240, cfg)
for k, clip in enumerate(long_plan.clips[:3]):
    print(f"clip {k}: key={clip.key_frame} members={clip.members}")
print("frame 5 is governed by", governing_tokens(long_plan, 5))

# %% [markdown]
# A 55-frame video is short. Neighbouring spans share their end frame, so
# boundary frames carry two tokens and the backend averages both masks there.

# %%
short_plan = plan(55, cfg)
shared = [f for f in range(55) if len(governing_tokens(short_plan, f)) == 2]
print("shared boundary frames:", shared)
print("clip 0 slots (padded by repeating the last frame):", short_plan.clips[0].slots)

# %%
print(short_plan.to_json()[:300], "...")
