"""Walk through the annotation format: word-aligned traces and span lookup.

Builds one tiny video annotation in memory, serializes it to the JSONL
wire format, parses it back, and shows how a narration substring maps to
its per-keyframe trace points.
"""
import io
import json

from glarify import ActorNarration, Keyframe, TracePoint, VideoAnnotation, WordSpan, parse_annotations, trace_for_span

# A 2-keyframe clip. The narration "a dog runs" is aligned word by word:
# "dog" was pointed at on frame 0, "runs" on frames 0 and 1.
trace = (
    TracePoint(x=0.30, y=0.40, keyframe_index=0, time_ms=0),
    TracePoint(x=0.55, y=0.45, keyframe_index=0, time_ms=120),
    TracePoint(x=0.80, y=0.50, keyframe_index=1, time_ms=260),
)
actor = ActorNarration(
    actor_id="actor_a",
    narration="a dog runs",
    word_spans=(
        WordSpan(0, 1, ()),          # "a"    -> no points
        WordSpan(2, 5, (0,)),        # "dog"  -> point 0
        WordSpan(6, 10, (1, 2)),     # "runs" -> points 1, 2
    ),
    trace=trace,
)
video = VideoAnnotation(
    video_id="demo_video",
    keyframes=(Keyframe("frames/k0.png", 64, 48), Keyframe("frames/k1.png", 64, 48)),
    actors=(actor,),
)

print("one annotation record on the wire:")
print(json.dumps(video.to_record())[:120], "...")

# Round trip through the line-delimited parser.
line = json.dumps(video.to_record())
result = parse_annotations(io.StringIO(line + "\n"))
print(f"\nparsed {len(result.annotations)} video(s), {len(result.diagnostics)} diagnostic(s)")

# Map the substring "dog runs" (chars 2..10) to its trace, grouped by keyframe.
groups = trace_for_span(video, "actor_a", 2, 10)
for k, points in groups.items():
    coords = [(p.x, p.y, p.time_ms) for p in points]
    print(f"keyframe {k}: {coords}")

# Bad lines never abort the stream; they come back as diagnostics.
bad = line.replace('"x": 0.3', '"x": 1.3', 1)
result = parse_annotations(io.StringIO(bad + "\n" + line + "\n"))
print(f"\nwith a corrupt first line: {len(result.annotations)} parsed, diagnostic = {result.diagnostics[0].message!r}")
