#!/usr/bin/env python3
"""Writes the bundled corpus: English-like prose from a seeded random grammar.

Usage: make_corpus.py OUT [--bytes N] [--seed S]
"""

import argparse
import random

NAMES = """Anna Thomas Mary John Eliza Henry Clara Walter Ruth Samuel Grace Arthur
Edith Robert Alice Martin Helen George Jane Hugh Martha Oliver Lucy Peter Ada
Frederick Emma Charles Rose William""".split()

PLACES = """London Bristol York Dover Bath Oxford Boston Salem Lisbon Calais
Geneva Venice Paris Hull Leith""".split()

NOUNS = """man woman child house door window road river letter horse table
garden town village morning evening night day year hand face voice eye heart
friend mother father brother sister ship sea shore hill field tree wood fire
light room book paper money king queen captain doctor servant master stranger
church street bridge city country word name story truth question answer moment
hour week dream wall floor stair chair bed lamp candle clock coat hat boot
dog bird cloud rain snow wind storm sun moon star stone bread wine cup glass
gate path farm mill shop inn cart box chest key ring watch coin purse sword
gun boat harbour island mountain valley lake forest meadow crowd soldier
sailor priest judge lawyer clerk merchant widow girl boy lady gentleman
neighbour cousin uncle aunt husband wife family silence noise smell news
work debt promise secret plan journey mistake danger fear hope anger pity""".split()

ADJECTIVES = """old young little great small large long short dark bright cold
warm quiet loud poor rich happy sad strange kind cruel wise foolish tall
narrow broad heavy light empty full silent gentle rough pale red green blue
grey white black brown golden bitter sweet sudden slow quick proud humble
honest false true certain early late common rare simple plain fine clean
dirty tired eager careful careless lonely busy idle hungry distant near
open closed broken ancient new familiar curious grave cheerful solemn""".split()

ADVERBS = """slowly quickly quietly suddenly softly gravely gladly hardly
again still often never always once soon already rather nearly almost
perhaps certainly plainly carefully eagerly silently""".split()

VERBS_T = """saw found took gave held opened closed watched followed left
met knew loved feared called told asked carried brought sent kept wrote
read heard touched struck raised lifted pulled pushed crossed reached
passed entered remembered forgot noticed answered thanked paid sold bought
built broke burned filled emptied hid showed seized dropped""".split()

VERBS_I = """waited laughed smiled wept slept walked ran fell rose stood sat
spoke listened turned paused trembled hesitated returned arrived departed
vanished sighed nodded shrugged wandered lingered""".split()

PREPS = """in on under over near beside behind before after across through
into from toward against among within without upon along""".split()

SAYS = """said replied cried whispered answered asked murmured called added
observed remarked""".split()

CONJ = ["and", "but", "for", "so", "yet", "while", "though"]
PRONOUNS = ["he", "she", "they", "we", "I", "it"]
DETS = ["the", "the", "the", "a", "his", "her", "their", "that", "this", "my", "our", "every", "no"]
ADJ_AFTER = ["was", "seemed", "grew", "became", "looked"]


def zipf_choice(rng, words):
    weights = [1.0 / (i + 1) for i in range(len(words))]
    return rng.choices(words, weights)[0]


class Writer:
    def __init__(self, seed):
        self.rng = random.Random(seed)
        for pool in (NAMES, PLACES, NOUNS, ADJECTIVES, ADVERBS, VERBS_T, VERBS_I):
            self.rng.shuffle(pool)

    def pick(self, words):
        return zipf_choice(self.rng, words)

    def chance(self, p):
        return self.rng.random() < p

    def noun_phrase(self, subject=False):
        r = self.rng.random()
        if r < 0.15:
            return self.pick(NAMES)
        if subject and r < 0.35:
            return self.rng.choice(PRONOUNS)
        det = self.rng.choice(DETS)
        parts = [det]
        if self.chance(0.4):
            parts.append(self.pick(ADJECTIVES))
        noun = self.pick(NOUNS)
        if det in ("every", "a", "that", "this") or self.chance(0.7):
            parts.append(noun)
        else:
            parts.append(noun + ("es" if noun.endswith(("s", "x", "ch", "sh")) else "s"))
        if det == "a" and parts[1][0] in "aeiou":
            parts[0] = "an"
        return " ".join(parts)

    def prep_phrase(self):
        if self.chance(0.15):
            return self.rng.choice(["in", "to", "from", "near"]) + " " + self.pick(PLACES)
        return self.pick(PREPS) + " " + self.noun_phrase()

    def clause(self):
        subject = self.noun_phrase(subject=True)
        r = self.rng.random()
        if r < 0.5:
            verb = [self.pick(VERBS_T), self.noun_phrase()]
        elif r < 0.8:
            verb = [self.pick(VERBS_I)]
            if self.chance(0.3):
                verb.append(self.pick(ADVERBS))
        else:
            verb = [self.rng.choice(ADJ_AFTER), self.pick(ADJECTIVES)]
        words = [subject] + verb
        if self.chance(0.45):
            words.append(self.prep_phrase())
        return " ".join(words)

    def sentence(self):
        r = self.rng.random()
        if r < 0.12:
            return self.dialogue()
        if r < 0.18:
            s = "did " + self.clause_for_question() + "?"
        else:
            s = self.clause()
            if self.chance(0.35):
                s += ", " + self.rng.choice(CONJ) + " " + self.clause()
            if self.chance(0.08):
                s += "; " + self.clause()
            if self.chance(0.05):
                s += ", in the year " + str(self.rng.randint(1700, 1899))
            s += "!" if self.chance(0.04) else "."
        return s[0].upper() + s[1:]

    def clause_for_question(self):
        subject = self.noun_phrase(subject=True)
        verb = self.pick(VERBS_T)
        base = verb[:-2] if verb.endswith("ed") else verb
        return subject + " " + base + " " + self.noun_phrase()

    def dialogue(self):
        inner = self.clause()
        end = self.rng.choice([",", ",", "?", "!"])
        speaker = self.pick(NAMES)
        tail = self.pick(SAYS) + " " + speaker
        if self.chance(0.3):
            tail = speaker + " " + self.pick(SAYS)
        return '"' + inner[0].upper() + inner[1:] + end + '" ' + tail + "."

    def paragraph(self):
        n = self.rng.randint(2, 8)
        return " ".join(self.sentence() for _ in range(n))


def wrap(text, width=72):
    lines, line = [], ""
    for word in text.split(" "):
        if line and len(line) + 1 + len(word) > width:
            lines.append(line)
            line = word
        else:
            line = word if not line else line + " " + word
    if line:
        lines.append(line)
    return "\n".join(lines)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out")
    ap.add_argument("--bytes", type=int, default=1_000_000)
    ap.add_argument("--seed", type=int, default=1851)
    args = ap.parse_args()

    w = Writer(args.seed)
    chunks, size, chapter = [], 0, 0
    while size < args.bytes:
        if chapter == 0 or w.chance(0.04):
            chapter += 1
            block = "CHAPTER " + str(chapter) + "\n\n"
        else:
            block = wrap(w.paragraph()) + "\n\n"
        chunks.append(block)
        size += len(block)
    with open(args.out, "w", encoding="ascii", newline="\n") as f:
        f.write("".join(chunks))


if __name__ == "__main__":
    main()
