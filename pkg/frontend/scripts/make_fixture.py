"""Record a live session message log as a frontend test fixture.

Runs one ambiguous episode through the real service session loop with
the scripted oracle answering, and writes everything the console must
reproduce: the full message log, the phase at every input boundary, the
transcript, and the final scene frame.

Usage: python3 make_fixture.py CHECKPOINT SCENARIO SEED OUT.json
"""

import json
import sys

from deskagent import lang, scenegen, service, world
from deskagent.evalsuite import oracle_user
from deskagent.pipeline import Pipeline


def main() -> None:
    ckpt, scenario, seed, out = (sys.argv[1], sys.argv[2],
                                 int(sys.argv[3]), sys.argv[4])
    pipe, _ = Pipeline.load(ckpt)
    family, mode = service.SCENARIOS[scenario]
    scene, task, _ = scenegen.sample_scene(family, mode, seed)
    session = service.Session(1, pipe, scene, task, seed=seed)

    def boundary():
        return {"after_seq": session.messages[-1].seq,
                "phase": session.phase.value,
                "accepts_input": session.phase.value in
                ("await_instruction", "await_answer")}

    answerer = oracle_user(scene, task)
    boundaries = [boundary()]
    session.provide_input(" ".join(lang.ambiguous_instruction(family)))
    boundaries.append(boundary())
    rounds = 0
    while not session.closed:
        question = session.transcript[-1][1]
        # the question carries its trailing signal token; strip it
        answer = answerer(tuple(question[:-1]), rounds)
        rounds += 1
        session.provide_input(" ".join(answer))
        boundaries.append(boundary())
    fixture = {
        "scenario": scenario,
        "seed": seed,
        "messages": [m.to_dict() for m in session.messages],
        "boundaries": boundaries,
        "transcript": [[sp, list(t)] for sp, t in session.transcript],
        "final_frame": service.scene_frame(session.scene),
        "result": session.result,
    }
    with open(out, "w") as fh:
        json.dump(fixture, fh, indent=1, sort_keys=True)
    print(f"wrote {out}: {len(session.messages)} messages, "
          f"success={session.result.get('success')}")


if __name__ == "__main__":
    main()
