"""Bundled stopword lists (English, French), selected by config key."""

from __future__ import annotations

ENGLISH = frozenset(
    """a about above after again against all am an and any are as at be because
    been before being below between both but by can did do does doing down
    during each few for from further had has have having he her here hers
    herself him himself his how i if in into is it its itself just me more
    most my myself no nor not now of off on once only or other our ours
    ourselves out over own same she should so some such than that the their
    theirs them themselves then there these they this those through to too
    under until up very was we were what when where which while who whom why
    will with you your yours yourself yourselves""".split()
)

FRENCH = frozenset(
    """au aux avec ce ces dans de des du elle en et eux il ils je la le les
    leur lui ma mais me meme mes moi mon ne nos notre nous on ou par pas pour
    qu que qui sa se ses son sur ta te tes toi ton tu un une vos votre vous
    etait etaient suis es est sommes etes sont sera seront ai as avons avez
    ont cette cet comme plus tres tout tous toute toutes""".split()
)

LISTS = {"en": ENGLISH, "fr": FRENCH, "none": frozenset()}


def for_language(lang: str) -> frozenset[str]:
    try:
        return LISTS[lang]
    except KeyError:
        raise ValueError(f"no bundled stopword list for language '{lang}'") from None
